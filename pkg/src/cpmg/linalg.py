"""Small linear-algebra kernels: matvec, Jacobi, norms, direct solves."""

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimMismatch, Singular, ZeroDiagonal

# Dense LU up to this size; SuperLU above it.
DENSE_MAX = 2500
TINY = 1e-300


def inf_norm(v):
    v = np.asarray(v)
    return float(np.abs(v).max()) if v.size else 0.0


def rel_norm(num, den):
    """``||num|| / ||den||`` in the infinity norm; absolute when ``||den||`` vanishes."""
    d = inf_norm(den)
    n = inf_norm(num)
    return n if d < TINY else n / d


def spmv(A, u):
    u = np.asarray(u)
    if A.shape[1] != u.shape[0]:
        raise DimMismatch(f"matrix has {A.shape[1]} columns, vector has {u.shape[0]} entries")
    return A @ u


def jacobi_sweep(A, u, f, diag=None):
    """One undamped Jacobi update ``u + diag(A)^-1 (f - A u)``."""
    d = A.diagonal() if diag is None else diag
    if np.any(d == 0):
        raise ZeroDiagonal("Jacobi needs a nonzero diagonal")
    return u + (f - spmv(A, u)) / d


class Factorization:
    """Reusable LU factorization of a square matrix."""

    def __init__(self, A, dense_max=DENSE_MAX):
        if A.shape[0] != A.shape[1]:
            raise DimMismatch("direct solve needs a square matrix")
        self.n = A.shape[0]
        self.dense = self.n <= dense_max
        if self.dense:
            M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                try:
                    self._lu = sla.lu_factor(M, check_finite=False)
                except (sla.LinAlgWarning, ValueError) as exc:
                    raise Singular(str(exc)) from exc
            piv = np.abs(np.diag(self._lu[0]))
            if self.n and piv.min() <= 1e-14 * max(piv.max(), TINY):
                raise Singular("matrix is numerically singular")
        else:
            try:
                self._lu = spla.splu(sp.csc_matrix(A))
            except RuntimeError as exc:
                raise Singular(str(exc)) from exc

    def solve(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n:
            raise DimMismatch("right-hand side has the wrong length")
        if self.dense:
            return sla.lu_solve(self._lu, f, check_finite=False)
        return self._lu.solve(f)


def direct_solve(A, f):
    return Factorization(A).solve(f)
