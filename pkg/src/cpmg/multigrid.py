"""Closest-point geometric multigrid.

Every level is re-discretized on its own band; all bands share one grid
origin so that coarse nodes are fine nodes.  Transfers between adjacent
levels are linear closest-point interpolations.  The default smoother is
a Jacobi sweep on the shifted Cartesian Laplacian followed immediately by
a cubic closest-point extension.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .band import build_band, default_origin
from .errors import MaxCyclesExceeded, ZeroDiagonal
from .linalg import Factorization, rel_norm
from .operators import SystemParams, assemble_operators, build_extension, build_transfer

log = logging.getLogger(__name__)

SMOOTHERS = ("ruuth_merriman", "standard")


@dataclass(frozen=True)
class MgParams:
    nu1: int = 3
    nu2: int = 3
    smoother_mode: str = "ruuth_merriman"
    tol: float = 1e-6
    max_cycles: int = 50
    # extension degree inside the coarsest-level consistency term
    coarse_p: int = 3

    def __post_init__(self):
        if self.smoother_mode not in SMOOTHERS:
            raise ValueError(f"smoother_mode must be one of {SMOOTHERS}")


@dataclass(frozen=True, eq=False)
class MgLevel:
    grid: object
    A: sp.csr_matrix
    A_tilde: sp.csr_matrix
    E: sp.csr_matrix
    params: SystemParams
    diag_tilde: np.ndarray = field(repr=False)
    diag_A: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class MgHierarchy:
    levels: List[MgLevel]
    restrictions: List[sp.csr_matrix]     # level l -> l+1
    prolongations: List[sp.csr_matrix]    # level l+1 -> l
    params: MgParams
    coarse_solver: Factorization = field(repr=False)

    @property
    def finest(self):
        return self.levels[0]


def make_level(grid, params, diffusivity=None):
    ops = assemble_operators(grid, params, diffusivity)
    n = grid.n
    A_tilde = (params.c * sp.identity(n, format="csr") - ops.L).tocsr()
    E = ops.E_q if params.q == 3 else build_extension(grid, 3)
    dt = A_tilde.diagonal()
    dA = ops.A.diagonal()
    if np.any(dt == 0):
        raise ZeroDiagonal("shifted Laplacian has a zero diagonal entry")
    return MgLevel(grid, ops.A, A_tilde, E, params, dt, dA)


def level_spacings(dx_finest, n_coarsest):
    """Halving ladder from ``dx_finest`` up to ``1 / n_coarsest``."""
    dx_c = 1.0 / n_coarsest
    ratio = dx_c / dx_finest
    k = int(round(np.log2(ratio)))
    if k < 1 or not np.isclose(2.0 ** k, ratio, rtol=1e-9):
        raise ValueError(f"dx_finest={dx_finest} is not 1/{n_coarsest} divided by a power of 2 (>= 2 levels)")
    return [dx_c / 2 ** (k - j) for j in range(k + 1)]


def build_hierarchy(surface, dx_finest, n_coarsest=5, params=SystemParams(),
                    mg_params=MgParams(), diffusivity_fn=None):
    """Assemble every level of the V-cycle, finest first.

    ``diffusivity_fn(cp, param)`` gives the scalar diffusivity for
    variable-coefficient problems.  An explicit ``params.gamma`` is taken
    as the finest-level value and scaled with ``1/dx^2`` on coarser levels.

    Each level keeps the system matrix built from ``params``; it drives the
    standard smoother and the residual diagnostics.  The coarsest solve uses
    degree ``mg_params.coarse_p`` in the consistency term, by default the
    same cubic extension the smoother applies, so that the coarse problem
    matches the discretization the Ruuth-Merriman iteration converges to.
    """
    spacings = level_spacings(dx_finest, n_coarsest)
    origin = default_origin(surface, spacings[0], degree=3, coarse_dx=spacings[-1])
    levels = []
    for dx in spacings:
        grid = build_band(surface, dx, max_degree=3, origin=origin)
        lp = params if params.gamma is None else replace(
            params, gamma=params.gamma * (spacings[0] / dx) ** 2)
        a = None if diffusivity_fn is None else diffusivity_fn(grid.cp, grid.param)
        levels.append(make_level(grid, lp, a))
        log.debug("level dx=%g n=%d", dx, grid.n)
    R, P = [], []
    for fine, coarse in zip(levels[:-1], levels[1:]):
        r, p = build_transfer(fine.grid, coarse.grid)
        R.append(r)
        P.append(p)
    coarse = levels[-1]
    if mg_params.coarse_p == coarse.params.p:
        A_c = coarse.A
    else:
        cp_params = replace(coarse.params, p=mg_params.coarse_p)
        a = None if diffusivity_fn is None else diffusivity_fn(coarse.grid.cp, coarse.grid.param)
        A_c = assemble_operators(coarse.grid, cp_params, a).A
    return MgHierarchy(levels, R, P, mg_params, Factorization(A_c))


def rm_smooth(level, u, f, sweeps):
    """Jacobi on ``c I - L`` then ``u := E u``, repeated ``sweeps`` times."""
    for _ in range(sweeps):
        u = u + (f - level.A_tilde @ u) / level.diag_tilde
        u = level.E @ u
    return u


def standard_smooth(level, u, f, sweeps):
    """Plain Jacobi on the full system matrix."""
    for _ in range(sweeps):
        u = u + (f - level.A @ u) / level.diag_A
    return u


def v_cycle(h, level_index, u, f):
    """One recursive V-cycle on level ``level_index``; returns the new iterate."""
    lv = h.levels[level_index]
    mode = h.params.smoother_mode
    smooth = rm_smooth if mode == "ruuth_merriman" else standard_smooth
    u = smooth(lv, u, f, h.params.nu1)
    if mode == "ruuth_merriman":
        r = f - lv.A_tilde @ u
    else:
        r = f - lv.A @ (lv.E @ u)
    f2 = h.restrictions[level_index] @ r
    if level_index + 1 == len(h.levels) - 1:
        u2 = h.coarse_solver.solve(f2)
    else:
        u2 = v_cycle(h, level_index + 1, np.zeros_like(f2), f2)
    u = u + h.prolongations[level_index] @ u2
    return smooth(lv, u, f, h.params.nu2)


@dataclass
class CycleStats:
    cycle: int
    rel_change: float
    rel_residual: float
    surface_error: Optional[float] = None


@dataclass
class SolveResult:
    u: np.ndarray
    stats: List[CycleStats]
    converged: bool

    @property
    def cycles(self):
        return len(self.stats)


def solve(h, f, u0=None, error_fn: Optional[Callable] = None, strict=False,
          min_cycles=0):
    """Repeat V-cycles until the relative successive change drops below ``tol``.

    ``error_fn(u)`` is evaluated on ``E u`` after each cycle when given.
    ``min_cycles`` forces extra cycles past convergence (for plateau studies).
    """
    top = h.finest
    u = np.zeros(top.grid.n) if u0 is None else np.asarray(u0, dtype=float).copy()
    stats = []
    converged = False
    for k in range(1, max(h.params.max_cycles, min_cycles) + 1):
        new = v_cycle(h, 0, u, f)
        change = rel_norm(new - u, u)
        u = new
        res = rel_norm(f - top.A @ u, f)
        err = None if error_fn is None else error_fn(top.E @ u)
        stats.append(CycleStats(k, change, res, err))
        log.info("cycle %d rel_change=%.3e rel_residual=%.3e err=%s", k, change, res, err)
        if change < h.params.tol:
            converged = True
            if k >= min_cycles:
                break
    if not converged:
        if strict:
            raise MaxCyclesExceeded(f"no convergence in {h.params.max_cycles} cycles")
        log.warning("V-cycles stopped after %d cycles without meeting tol", len(stats))
    return SolveResult(u, stats, converged)


def stats_rows(stats):
    """Per-cycle rows ``cycle rel_change rel_residual surface_error``."""
    for s in stats:
        yield (s.cycle, s.rel_change, s.rel_residual,
               float("nan") if s.surface_error is None else s.surface_error)
