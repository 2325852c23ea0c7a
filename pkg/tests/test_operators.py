import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cpmg.band import build_band, default_origin
from cpmg.errors import NonpositiveDiffusivity, StencilEscapesBand
from cpmg.geometry import Circle, Sphere
from cpmg.operators import (SystemParams, assemble_operators, assemble_system,
                            barycentric_weights_1d, build_extension, build_laplacian,
                            build_transfer, build_variable_laplacian, cost_audit,
                            export_matrix_market, interp_matrix, verify_m_matrix)


def _canonical(A):
    assert A.has_sorted_indices
    assert not np.any(A.data == 0)


def test_cubic_weights_midpoint():
    assert np.allclose(barycentric_weights_1d(3, 0.5), [-1 / 16, 9 / 16, 9 / 16, -1 / 16], atol=1e-16)
    assert np.allclose(barycentric_weights_1d(1, 0.05, dx=0.1), [0.5, 0.5])
    assert np.array_equal(np.abs(barycentric_weights_1d(3, 0.0)), [0, 1, 0, 0])


def test_cubic_weights_closed_form():
    # omega_00 = -a(dx-a)(2dx-a)/(6dx^3) and its neighbours
    dx, a = 0.1, 0.037
    w = barycentric_weights_1d(3, a, dx)
    ref = [-a * (dx - a) * (2 * dx - a) / (6 * dx ** 3),
           (dx + a) * (dx - a) * (2 * dx - a) / (2 * dx ** 3),
           (dx + a) * a * (2 * dx - a) / (2 * dx ** 3),
           -(dx + a) * a * (dx - a) / (6 * dx ** 3)]
    assert np.allclose(w, ref, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([1, 2, 3, 4, 5]), st.floats(0, 1))
def test_weights_partition_and_exactness(degree, a):
    w = barycentric_weights_1d(degree, a)
    assert abs(w.sum() - 1) <= 1e-14
    nodes = np.arange(degree + 1) - (degree - 1) // 2 if degree % 2 else np.arange(degree + 1)
    s = a if degree % 2 else a + (degree - 1) // 2
    for k in range(degree + 1):
        assert abs(w @ nodes.astype(float) ** k - s ** k) <= 1e-11 * max(1, abs(s) ** k)


def test_extension_rows_and_columns(circle_grid, sphere_grid):
    for g in (circle_grid, sphere_grid):
        for deg in (1, 3):
            E = build_extension(g, deg)
            _canonical(E)
            assert np.abs(E @ np.ones(g.n) - 1).max() <= 1e-12
            assert np.diff(E.indptr).max() <= (deg + 1) ** g.dim
            # no column hits an edge node
            assert np.all(g.interp[E.indices])


def test_extension_reproduces_cubics(sphere_grid):
    g = sphere_grid
    E = build_extension(g, 3)
    P = lambda x: 1 + x[:, 0] ** 3 - 2 * x[:, 0] * x[:, 1] * x[:, 2] + x[:, 2] ** 2
    assert np.abs(E @ P(g.x) - P(g.cp)).max() <= 1e-12 * np.abs(P(g.cp)).max()


def test_extension_degree_guard(circle):
    g = build_band(circle, 0.1, max_degree=1)
    with pytest.raises(StencilEscapesBand):
        build_extension(g, 3)


def test_interp_matrix_escape(circle_grid):
    with pytest.raises(StencilEscapesBand):
        interp_matrix(circle_grid, np.array([[0.0, 0.0]]), 3)


def test_laplacian(circle_grid, sphere_grid):
    for g in (circle_grid, sphere_grid):
        L = build_laplacian(g)
        _canonical(L)
        assert np.abs(L @ np.ones(g.n)).max() <= 1e-12 / g.dx ** 2
        d = L.diagonal()[g.interp]
        assert np.allclose(d, -2 * g.dim / g.dx ** 2)
        Lx = L @ (g.x[:, 0] ** 2)
        assert np.abs(Lx[g.interp] - 2).max() <= 1e-10
        assert np.abs(L - L.T).max() == 0


def test_laplacian_nnz_sphere():
    g = build_band(Sphere(), 0.1)
    assert build_laplacian(g).nnz == 71962


def test_variable_laplacian(circle_grid):
    g = circle_grid
    L = build_laplacian(g)
    assert np.abs(build_variable_laplacian(g, np.ones(g.n)) - L).max() <= 1e-14
    assert np.abs(build_variable_laplacian(g, 2 * np.ones(g.n)) - 2 * L).max() <= 1e-12
    a = 1.5 + g.cp[:, 0]
    Lt = build_variable_laplacian(g, a)
    assert np.abs(Lt @ np.ones(g.n)).max() <= 1e-10 / g.dx ** 2
    with pytest.raises(NonpositiveDiffusivity):
        build_variable_laplacian(g, -np.ones(g.n))
    with pytest.raises(ValueError):
        build_variable_laplacian(g, np.ones(3))


def test_variable_laplacian_1d_flux_form():
    # a single row of nodes along x: interior rows give (a u')' = a' u' for linear u
    from cpmg.band import BandedGrid
    dx = 0.01
    idx = np.stack([np.arange(50), np.zeros(50, int)], axis=1)
    x = idx * dx
    g = BandedGrid(dx, np.zeros(2), idx, x.copy(), np.zeros(50), np.ones(50, bool), 3, 1.0)
    a = 1 + 2 * x[:, 0]
    u = 3 * x[:, 0]
    r = build_variable_laplacian(g, a) @ u
    assert np.allclose(r[1:-1], 2 * 3, atol=1e-9)


def test_system_row_sums_and_canonical(circle_grid, sphere_grid):
    for g in (circle_grid, sphere_grid):
        ops = assemble_operators(g)
        one = np.ones(g.n)
        tol = 1e-8 * ops.gamma
        assert np.abs(ops.M @ one).max() <= tol
        assert np.abs(ops.A @ one - 1).max() <= tol
        _canonical(ops.A)
        _canonical(ops.M)


def test_system_formula(circle_grid):
    g = circle_grid
    P = SystemParams(c=2.0, gamma=300.0, p=1, q=3)
    A = assemble_system(g, P)
    I = sp.identity(g.n)
    ref = 2.0 * I - build_extension(g, 1) @ build_laplacian(g) + 300.0 * (I - build_extension(g, 3))
    assert np.abs(A - ref).max() <= 1e-10


def test_gamma_guard(circle_grid):
    with pytest.raises(ValueError):
        assemble_system(circle_grid, SystemParams(c=1.0, gamma=-1.0))


def test_m_matrix_2d_true_3d_false(circle_grid, sphere_grid):
    rep = verify_m_matrix(assemble_system(circle_grid), 1.0)
    assert rep.is_m_matrix and rep.worst_offdiag <= 0 and rep.min_diag > 0
    rep3 = verify_m_matrix(assemble_system(sphere_grid), 1.0)
    assert not rep3.is_m_matrix and rep3.worst_offdiag > 0
    assert len(rep3.offending_rows) > 0


def test_m_matrix_identity():
    rep = verify_m_matrix(sp.identity(5, format="csr"), 1.0)
    assert rep.is_m_matrix and rep.worst_rowsum == 0


def test_m_matrix_bean(bean):
    rep = verify_m_matrix(assemble_system(build_band(bean, 0.05)), 1.0)
    assert rep.is_m_matrix


def test_varah_bound(circle):
    g = build_band(circle, 0.2)
    A = assemble_system(g).toarray()
    assert np.abs(np.linalg.inv(A)).sum(axis=1).max() <= 1.0 + 1e-10


def test_constant_solution(circle_grid):
    from cpmg.linalg import direct_solve
    A = assemble_system(circle_grid, SystemParams(c=1.0))
    u = direct_solve(A, np.ones(circle_grid.n))
    assert np.abs(u - 1).max() <= 1e-8


def test_transfers(circle):
    o = default_origin(circle, 0.05, coarse_dx=0.2)
    fine, coarse = build_band(circle, 0.05, origin=o), build_band(circle, 0.1, origin=o)
    R, P = build_transfer(fine, coarse)
    assert R.shape == (coarse.n, fine.n) and P.shape == (fine.n, coarse.n)
    assert np.abs(R @ np.ones(fine.n) - 1).max() <= 1e-12
    assert np.abs(P @ np.ones(coarse.n) - 1).max() <= 1e-12
    g = lambda p: np.cos(np.arctan2(p[:, 1], p[:, 0]) * 2)
    err = np.abs(R @ g(fine.cp) - g(coarse.cp)).max()
    assert err <= 2 * 0.05 ** 2 * 4


def test_transfer_preconditions(circle):
    a = build_band(circle, 0.1)
    with pytest.raises(ValueError):
        build_transfer(a, build_band(circle, 0.3))
    with pytest.raises(ValueError):
        build_transfer(a, build_band(circle, 0.2, origin=a.origin + 0.05))


def test_cost_audit_matches_reference():
    # reference structural counts for the unit sphere at dx = 0.2
    a = cost_audit(build_band(Sphere(), 0.2))
    assert (a.n, a.nnz_L, a.nnz_E3, a.nnz_M) == (3190, 20758, 204160, 205686)
    assert a.stored_E3 < a.nnz_E3 and not a.m_matrix


def test_cost_audit_generic_position(rng):
    # an off-grid center avoids exact grid-plane coincidences, so stored and
    # structural counts agree closely
    s = Sphere(center=(0.0123, 0.0311, 0.0071))
    a = cost_audit(build_band(s, 0.2))
    assert a.stored_E3 == a.nnz_E3
    assert 61 <= a.stored_E3 / a.n <= 67


def test_matrix_market_roundtrip(tmp_path, circle_grid):
    A = assemble_system(circle_grid)
    path = tmp_path / "A.mtx"
    export_matrix_market(A, str(path), comment="circle dx=0.1")
    B = scipy.io.mmread(str(path))
    assert np.abs(B - A).max() <= 1e-12 * np.abs(A).max()
