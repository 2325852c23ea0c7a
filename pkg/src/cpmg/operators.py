"""Sparse operators on a banded grid.

All matrices are ``scipy.sparse.csr_matrix`` with sorted column indices and
no stored zeros.  Row ``i`` of every operator belongs to band node ``i``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .band import _neighbors, stencil_base
from .errors import NonpositiveDiffusivity, StencilEscapesBand


def _lagrange(s, degree):
    """Lagrange basis on nodes 0..degree evaluated at local coordinate ``s``."""
    s = np.asarray(s, dtype=float)
    if degree == 1:
        return np.stack([1 - s, s], axis=-1)
    if degree == 3:
        # nodes -1, 0, 1, 2 relative to the middle cell
        a = s - 1
        return np.stack([-a * (1 - a) * (2 - a) / 6,
                         (1 + a) * (1 - a) * (2 - a) / 2,
                         (1 + a) * a * (2 - a) / 2,
                         -(1 + a) * a * (1 - a) / 6], axis=-1)
    nodes = np.arange(degree + 1)
    w = np.ones(s.shape + (degree + 1,))
    for j in nodes:
        for m in nodes:
            if m != j:
                w[..., j] *= (s - m) / (j - m)
    return w


def barycentric_weights_1d(degree, a, dx=1.0):
    """Uniform-grid interpolation weights for a point ``a`` into its cell.

    For odd ``degree`` the point sits in the middle cell of the stencil and
    ``0 <= a <= dx`` is measured from the left node of that cell.
    """
    s = np.asarray(a, dtype=float) / dx + (degree - 1) // 2
    return _lagrange(s, degree)


def interp_matrix(grid, points, degree, require_interp=False):
    """Tensor-product interpolation from ``grid`` nodes to arbitrary ``points``.

    Returns a CSR matrix of shape ``(len(points), grid.n)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, dim = points.shape
    base, s = stencil_base(grid.origin, grid.dx, points, degree)
    w1 = _lagrange(s, degree)                        # (m, dim, degree+1)
    offsets = grid.stencil_offsets(degree)           # (S, dim)
    w = np.ones((m, len(offsets)))
    for k in range(dim):
        w *= w1[:, k, :][:, offsets[:, k]]
    cols = grid.lookup(base[:, None, :] + offsets)
    if np.any(cols < 0):
        raise StencilEscapesBand("interpolation stencil leaves the band")
    if require_interp and not np.all(grid.interp[cols]):
        raise StencilEscapesBand("interpolation stencil touches an edge node")
    rows = np.repeat(np.arange(m), len(offsets))
    E = sp.csr_matrix((w.ravel(), (rows, cols.ravel())), shape=(m, grid.n))
    return _tidy(E)


def _tidy(A):
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def build_extension(grid, degree):
    """Closest-point extension matrix ``E``: ``(E u)_i`` interpolates ``u`` at ``cp(x_i)``."""
    if degree > grid.max_degree:
        raise StencilEscapesBand(f"degree {degree} exceeds band degree {grid.max_degree}")
    return interp_matrix(grid, grid.cp, degree, require_interp=True)


def _flux_form(grid, a=None):
    """Sum over axes of backward-difference(face coefficient * forward-difference).

    Face coefficients are 1, or the mean of ``a`` over the two end nodes.
    Node pairs with one end outside the band carry no flux, so every row
    sums to zero and interpolation rows get the full centered stencil.
    """
    n, dim = grid.n, grid.dim
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    nbr = _neighbors(dim)[1::2]                     # +e_k only; faces counted once
    here = np.arange(n)
    for off in nbr:
        j = grid.lookup(grid.idx + off)
        ok = j >= 0
        i, j = here[ok], j[ok]
        coef = np.ones(len(i)) if a is None else 0.5 * (a[i] + a[j])
        rows += [i, j]
        cols += [j, i]
        vals += [coef, coef]
        np.add.at(diag, i, -coef)
        np.add.at(diag, j, -coef)
    rows.append(here)
    cols.append(here)
    vals.append(diag)
    inv = 1.0 / grid.dx ** 2
    L = sp.csr_matrix((np.concatenate(vals) * inv, (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return _tidy(L)


def build_laplacian(grid):
    """Second-order centered Laplacian (5-point in 2D, 7-point in 3D)."""
    return _flux_form(grid)


def build_variable_laplacian(grid, a_at_cp):
    """Flux-form operator ``div(a grad)`` with face-averaged diffusivity."""
    a = np.asarray(a_at_cp, dtype=float)
    if a.shape != (grid.n,):
        raise ValueError("diffusivity must have one value per band node")
    if np.any(a <= 0):
        raise NonpositiveDiffusivity("diffusivity must be positive at every closest point")
    return _flux_form(grid, a)


@dataclass(frozen=True)
class SystemParams:
    c: float = 1.0
    gamma: Optional[float] = None   # None -> 2*dim/dx^2
    p: int = 1
    q: int = 3

    def resolved_gamma(self, dim, dx):
        return 2.0 * dim / dx ** 2 if self.gamma is None else float(self.gamma)

    def validate(self, dim, dx):
        g = self.resolved_gamma(dim, dx)
        if g == -self.c:
            raise ValueError("gamma must differ from -c")
        return g


@dataclass(frozen=True)
class Operators:
    """The matrices of one assembled system; ``A = c I - M``."""
    E_p: sp.csr_matrix
    E_q: sp.csr_matrix
    L: sp.csr_matrix
    M: sp.csr_matrix
    A: sp.csr_matrix
    gamma: float


def assemble_operators(grid, params=SystemParams(), diffusivity=None):
    gamma = params.validate(grid.dim, grid.dx)
    n = grid.n
    I = sp.identity(n, format="csr")
    if diffusivity is None:
        L = build_laplacian(grid)
        E_p = build_extension(grid, params.p)
        E_q = E_p if params.q == params.p else build_extension(grid, params.q)
    else:
        L = build_variable_laplacian(grid, diffusivity)
        E_p = E_q = build_extension(grid, params.q)
    M = _tidy(E_p @ L - gamma * (I - E_q))
    A = _tidy(params.c * I - M)
    return Operators(E_p, E_q, L, M, A, gamma)


def assemble_system(grid, params=SystemParams(), diffusivity=None):
    """System matrix ``A = c I - E_p L + gamma (I - E_q)``."""
    return assemble_operators(grid, params, diffusivity).A


@dataclass(frozen=True)
class MMatrixReport:
    is_m_matrix: bool
    worst_offdiag: float      # largest off-diagonal entry (should be <= 0)
    worst_rowsum: float       # largest |row sum - c|
    min_diag: float
    offending_rows: np.ndarray


def verify_m_matrix(A, c, rowsum_tol=None, offdiag_tol=0.0):
    """Exhaustive sign and row-sum scan of ``A``."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    d = A.diagonal()
    off = A - sp.diags(d)
    off = _tidy(off)
    row_max = np.full(n, -np.inf)
    if off.nnz:
        rmax = off.max(axis=1).toarray().ravel()
        has = np.diff(off.indptr) > 0
        row_max[has] = rmax[has]
    rowsum = np.asarray(A.sum(axis=1)).ravel()
    if rowsum_tol is None:
        rowsum_tol = 1e-8 * max(1.0, np.abs(d).max())
    bad = (d <= 0) | (row_max > offdiag_tol) | (np.abs(rowsum - c) > rowsum_tol)
    return MMatrixReport(
        is_m_matrix=not bad.any(),
        worst_offdiag=float(row_max.max()) if n else 0.0,
        worst_rowsum=float(np.abs(rowsum - c).max()) if n else 0.0,
        min_diag=float(d.min()) if n else 0.0,
        offending_rows=np.flatnonzero(bad),
    )


def build_transfer(fine, coarse):
    """Closest-point restriction (coarse x fine) and prolongation (fine x coarse)."""
    if not np.isclose(coarse.dx, 2 * fine.dx, rtol=1e-12, atol=0):
        raise ValueError("coarse grid spacing must be twice the fine spacing")
    if not np.allclose(coarse.origin, fine.origin, rtol=0, atol=1e-12):
        raise ValueError("fine and coarse grids must share an origin")
    restriction = interp_matrix(fine, coarse.cp, 1)
    prolongation = interp_matrix(coarse, fine.cp, 1)
    return restriction, prolongation


def export_matrix_market(A, path, comment=""):
    scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment)


def pattern(A):
    """0/1 copy of the stored sparsity pattern of ``A``."""
    P = sp.csr_matrix(A, copy=True)
    P.data[:] = 1.0
    return P


def stencil_pattern(grid, degree):
    """Full stencil pattern of the degree-``degree`` extension, zero weights included."""
    base, _ = stencil_base(grid.origin, grid.dx, grid.cp, degree)
    offsets = grid.stencil_offsets(degree)
    cols = grid.lookup(base[:, None, :] + offsets)
    rows = np.repeat(np.arange(grid.n), len(offsets))
    P = sp.csr_matrix((np.ones(cols.size), (rows, cols.ravel())), shape=(grid.n, grid.n))
    P.sum_duplicates()
    P.data[:] = 1.0
    return P


@dataclass(frozen=True)
class CostAudit:
    dx: float
    n: int
    nnz_L: int
    nnz_E3: int
    nnz_M: int
    stored_E3: int
    stored_M: int
    m_matrix: bool


def cost_audit(grid, params=SystemParams()):
    """Structural and stored nonzero counts of ``L``, ``E_3`` and ``M``.

    Structural counts include stencil entries whose weight is exactly zero
    because a closest point lies on a grid plane; they describe the memory
    a generic surface position needs.
    """
    ops = assemble_operators(grid, params)
    I = sp.identity(grid.n, format="csr")
    Pp, Pq = stencil_pattern(grid, params.p), stencil_pattern(grid, params.q)
    Pm = pattern(Pp @ pattern(ops.L) + Pq + I)
    rep = verify_m_matrix(ops.A, params.c, rowsum_tol=1e-8 * ops.gamma)
    return CostAudit(grid.dx, grid.n, ops.L.nnz, Pq.nnz, Pm.nnz,
                     build_extension(grid, 3).nnz, ops.M.nnz, rep.is_m_matrix)
