"""Narrow-band uniform Cartesian grids around a surface.

A band holds every grid node within ``bandwidth(dx)`` of the surface, plus
whatever extra nodes are needed so that the interpolation stencil of each
node's closest point and the difference stencil of each interpolation node
lie inside the band.  Nodes are stored in lexicographic order of their
integer multi-index, which is also the order of their linear keys, so
lookups are a single ``searchsorted``.
"""

import csv
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from .errors import BandTooNarrow, StencilEscapesBand

SNAP_TOL = 1e-12
MAX_SWEEPS = 10


def bandwidth(dx, dim, degree):
    """Band half-width that covers every interpolation stencil of a surface point."""
    half = (degree + 1) / 2
    return np.sqrt((dim - 1) * half ** 2 + (1 + half) ** 2) * dx


def default_origin(surface, dx, degree=3, coarse_dx=None):
    """Lower grid corner snapped to a multiple of ``coarse_dx`` (or ``dx``)."""
    step = dx if coarse_dx is None else coarse_dx
    lo, _ = surface.bbox()
    bw = bandwidth(step, surface.dim, degree)
    return np.floor((np.asarray(lo) - 2 * bw) / step) * step


@dataclass(frozen=True, eq=False)
class BandedGrid:
    dx: float
    origin: np.ndarray
    idx: np.ndarray          # (n, dim) int64, lexicographically sorted
    cp: np.ndarray           # (n, dim)
    dist: np.ndarray         # (n,)
    interp: np.ndarray       # (n,) bool; False marks edge nodes
    max_degree: int
    bw: float
    param: Optional[np.ndarray] = None
    _extent: np.ndarray = field(default=None, repr=False)
    _keys: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        ext = self.idx.max(axis=0) + 2 * (self.max_degree + 2) + 1
        object.__setattr__(self, "_extent", ext.astype(np.int64))
        object.__setattr__(self, "_keys", self._key(self.idx))

    @property
    def dim(self):
        return self.idx.shape[1]

    @property
    def n(self):
        return len(self.idx)

    @property
    def x(self):
        return self.origin + self.idx * self.dx

    @property
    def role(self):
        return np.where(self.interp, "interp", "edge")

    def _key(self, multi):
        multi = np.asarray(multi, dtype=np.int64)
        key = np.zeros(multi.shape[:-1], dtype=np.int64)
        for k in range(self.dim):
            key = key * self._extent[k] + multi[..., k]
        return key

    def lookup(self, multi):
        """Row ids of multi-indices; -1 where a node is not in the band."""
        multi = np.asarray(multi, dtype=np.int64)
        inside = np.all((multi >= 0) & (multi < self._extent), axis=-1)
        key = self._key(np.where(inside[..., None], multi, 0))
        pos = np.searchsorted(self._keys, key)
        pos = np.minimum(pos, self.n - 1)
        hit = inside & (self._keys[pos] == key)
        return np.where(hit, pos, -1)

    def index_of(self, multi):
        return int(self.lookup(np.asarray(multi))[()])

    def stencil_offsets(self, degree):
        return np.array(list(product(range(degree + 1), repeat=self.dim)), dtype=np.int64)

    def dump_csv(self, path):
        """Write the band as CSV: ``ix iy [iz] x y [z] cpx cpy [cpz] dist role``."""
        axes = "xyz"[:self.dim]
        header = ([f"i{a}" for a in axes] + list(axes)
                  + [f"cp{a}" for a in axes] + ["dist", "role"])
        x = self.x
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                w.writerow([*self.idx[i].tolist(),
                            *(f"{v:.6e}" for v in x[i]),
                            *(f"{v:.6e}" for v in self.cp[i]),
                            f"{self.dist[i]:.6e}", "interp" if self.interp[i] else "edge"])


def stencil_base(origin, dx, q, degree):
    """Lower-corner multi-index and local coordinate of a degree-``degree`` stencil.

    For odd degree the query lies in the middle cell of the stencil.  Returns
    ``(base, s)`` where ``s`` is the position of ``q`` in units of ``dx``
    measured from ``base``; nodes within ``SNAP_TOL`` are snapped exactly.
    """
    s = (np.asarray(q, dtype=float) - origin) / dx
    r = np.round(s)
    s = np.where(np.abs(s - r) <= SNAP_TOL, r, s)
    if degree % 2:
        base = np.floor(s) - (degree - 1) // 2
    else:
        base = r - degree // 2
    return base.astype(np.int64), s - base


def locate_stencil(grid, q, degree):
    """Base multi-index of the interpolation stencil of ``q``; checks band membership."""
    base, _ = stencil_base(grid.origin, grid.dx, q, degree)
    nodes = base[..., None, :] + grid.stencil_offsets(degree)
    if np.any(grid.lookup(nodes) < 0):
        raise StencilEscapesBand("interpolation stencil leaves the band")
    return base


def _neighbors(dim):
    off = np.zeros((2 * dim, dim), dtype=np.int64)
    for k in range(dim):
        off[2 * k, k] = -1
        off[2 * k + 1, k] = 1
    return off


def _unique_rows(a):
    return np.unique(a, axis=0) if len(a) else a


def _candidates(surface, dx, origin, bw):
    """Grid nodes whose approximate distance is within reach of the band."""
    lo, hi = surface.bbox()
    dim = surface.dim
    n_hi = np.ceil((np.asarray(hi) + 2 * bw - origin) / dx).astype(int) + 1
    slack = bw + surface.approx_error + 1e-12
    grids = [np.arange(m) for m in n_hi[1:]]
    rest = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, dim - 1)
    keep = []
    for i0 in range(n_hi[0]):
        multi = np.column_stack([np.full(len(rest), i0), rest])
        x = origin + multi * dx
        d = surface.approx_distance(x)
        keep.append(multi[d <= slack])
    return np.concatenate(keep).astype(np.int64)


def build_band(surface, dx, max_degree=3, origin=None):
    """Build the banded grid around ``surface`` with spacing ``dx``."""
    if dx <= 0:
        raise ValueError("dx must be positive")
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    dim = surface.dim
    bw = bandwidth(dx, dim, max_degree)
    if origin is None:
        origin = default_origin(surface, dx, max_degree)
    origin = np.asarray(origin, dtype=float)

    multi = _candidates(surface, dx, origin, bw)
    res = surface.closest_point(origin + multi * dx, strict=False)
    near = res.dist <= bw
    idx, cp, dist = multi[near], res.cp[near], res.dist[near]
    param = None if res.param is None else res.param[near]

    offsets = np.array(list(product(range(max_degree + 1), repeat=dim)), dtype=np.int64)
    nbr = _neighbors(dim)
    for _ in range(MAX_SWEEPS):
        order = np.lexsort(idx.T[::-1])
        idx, cp, dist = idx[order], cp[order], dist[order]
        param = None if param is None else param[order]
        grid = BandedGrid(dx, origin, idx, cp, dist, np.ones(len(idx), bool), max_degree, bw, param)

        base, _ = stencil_base(origin, dx, cp, max_degree)
        stencil = _unique_rows((base[:, None, :] + offsets).reshape(-1, dim))
        diff = _unique_rows((stencil[:, None, :] + nbr).reshape(-1, dim))
        need = _unique_rows(np.concatenate([stencil, diff]))
        missing = need[grid.lookup(need) < 0]
        if len(missing) == 0:
            interp = np.zeros(len(idx), dtype=bool)
            interp[grid.lookup(stencil)] = True
            return BandedGrid(dx, origin, idx, cp, dist, interp, max_degree, bw, param)
        if np.any(missing < 0):
            raise BandTooNarrow("band reaches the grid origin; choose a lower origin")
        extra = surface.closest_point(origin + missing * dx, strict=False)
        idx = np.concatenate([idx, missing])
        cp = np.concatenate([cp, extra.cp])
        dist = np.concatenate([dist, extra.dist])
        if param is not None:
            param = np.concatenate([param, extra.param])
    raise BandTooNarrow(f"stencils still escape the band after {MAX_SWEEPS} sweeps")
