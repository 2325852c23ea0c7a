import numpy as np
import pytest

from cpmg.band import build_band
from cpmg.errors import UnknownProblem
from cpmg.geometry import DziukSurface
from cpmg.linalg import direct_solve
from cpmg.operators import assemble_operators, build_extension
from cpmg.problems import (PROBLEMS, SurfaceErrorProbe, bean_rhs_parts, dziuk_surface_divergence,
                           make_problem, surface_error)

H = 1e-3


def d1(f, x):
    return (f(x - 2 * H) - 8 * f(x - H) + 8 * f(x + H) - f(x + 2 * H)) / (12 * H)


def test_unknown_problem():
    with pytest.raises(UnknownProblem):
        make_problem("moebius")


def test_all_problems_construct():
    for name in PROBLEMS:
        pr = make_problem(name)
        assert pr.name == name


def test_circle_values_at_zero():
    pr = make_problem("circle")
    x = np.array([[1.0, 0.0]])
    assert pr.u(x, np.array([0.0]))[0] == 0
    assert pr.f(x, np.array([0.0]))[0] == 0


def test_sphere_harmonic_value():
    # u(0, pi/2) = -1, and -Lap_S u = 30 u for this degree-5 harmonic
    pr = make_problem("sphere_harmonic")
    tp = np.array([[0.0, np.pi / 2]])
    x = np.array([[1.0, 0.0, 0.0]])
    assert pr.u(x, tp)[0] == pytest.approx(-1.0)
    assert pr.f(x, tp)[0] == pytest.approx(-31.0)


def test_dziuk_zero_on_axis():
    pr = make_problem("dziuk")
    assert pr.u(np.array([[1.0, 0.0, 0.0]]))[0] == 0


def _sphere_lb(u, th, ph, a=None):
    """Laplace-Beltrami on the unit sphere in (theta, phi) by finite differences."""
    a = (lambda p: np.ones_like(p)) if a is None else a
    uph = lambda p: d1(lambda q: u(th, q), p)
    inner = lambda p: np.sin(p) * a(p) * uph(p)
    uth = lambda t: d1(lambda s: u(s, ph), t)
    return d1(inner, ph) / np.sin(ph) + a(ph) * d1(uth, th) / np.sin(ph) ** 2


def _sphere_pts(n, rng):
    th = rng.uniform(0, 2 * np.pi, n)
    ph = rng.uniform(0.2, np.pi - 0.2, n)
    x = np.stack([np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)], axis=1)
    return th, ph, x


def test_manufactured_circle(rng):
    pr = make_problem("circle")
    t = rng.uniform(0, 2 * np.pi, 100)
    x = np.stack([np.cos(t), np.sin(t)], axis=1)
    u = lambda s: pr.u(None, s)
    lap = d1(lambda s: d1(u, s), t)
    assert np.abs(-lap + u(t) - pr.f(x, t)).max() <= 1e-6 * np.abs(pr.f(x, t)).max()


def test_manufactured_sphere(rng):
    pr = make_problem("sphere_harmonic")
    th, ph, x = _sphere_pts(100, rng)
    u = lambda a, b: pr.u(None, np.stack([a, b], axis=-1))
    ref = -_sphere_lb(u, th, ph) + u(th, ph)
    assert np.abs(ref - pr.f(x, np.stack([th, ph], 1))).max() <= 1e-6 * np.abs(ref).max()


def test_manufactured_sphere_varcoef(rng):
    pr = make_problem("sphere_varcoef")
    th, ph, x = _sphere_pts(100, rng)
    u = lambda a, b: np.cos(b)
    ref = -_sphere_lb(u, th, ph, a=lambda p: np.cos(p) + 1.5) + u(th, ph)
    assert np.abs(ref - pr.f(x, np.stack([th, ph], 1))).max() <= 1e-6 * np.abs(ref).max()


def test_manufactured_torus(rng):
    R, r = 1.2, 0.6
    pr = make_problem("torus")
    th = rng.uniform(0, 2 * np.pi, 100)
    ph = rng.uniform(0, 2 * np.pi, 100)
    u = lambda a, b: pr.u(None, np.stack([a, b], axis=-1))
    rho = lambda b: R + r * np.cos(b)
    uth2 = d1(lambda s: d1(lambda q: u(q, ph), s), th)
    flux = lambda b: rho(b) / r * d1(lambda q: u(th, q), b)
    lap = (r / rho(ph) * uth2 + d1(flux, ph)) / (r * rho(ph))
    ref = -lap + u(th, ph)
    got = pr.f(None, np.stack([th, ph], 1))
    assert np.abs(ref - got).max() <= 1e-6 * np.abs(ref).max()


def test_manufactured_bean(bean):
    pr = make_problem("bean")
    t = np.linspace(0, bean.T, 137, endpoint=False)
    # keep the stencils off the spline knots, where the curvature has kinks
    knots = bean.spline.x
    t = t[np.abs(t[:, None] - knots[None, :]).min(axis=1) > 3 * H][:100]
    speed = lambda s: np.linalg.norm(bean.evaluate(s, 1), axis=-1)
    u = lambda s: bean_rhs_parts(bean, s)[0]
    lap = d1(lambda s: d1(u, s) / speed(s), t) / speed(t)
    ref = -lap + u(t)
    assert np.abs(ref - pr.f(None, t)).max() <= 1e-6 * np.abs(ref).max()


def test_manufactured_dziuk():
    # level-set identity: Lap_S u = Lap u - n.H n - (div n)(n.grad u) for u = x1 x2
    pts, _ = DziukSurface().samples(100)
    G = DziukSurface.grad_phi(pts)
    Hphi = DziukSurface.hess_phi(pts)
    g = np.linalg.norm(G, axis=1)
    n = G / g[:, None]
    div_n = (np.trace(Hphi, axis1=1, axis2=2) - np.einsum("mi,mij,mj->m", n, Hphi, n)) / g
    Hu = np.zeros((3, 3))
    Hu[0, 1] = Hu[1, 0] = 1
    grad_u = np.stack([pts[:, 1], pts[:, 0], 0 * pts[:, 0]], axis=1)
    lap_s = -np.einsum("mi,ij,mj->m", n, Hu, n) - div_n * np.sum(n * grad_u, axis=1)
    ref = -lap_s + pts[:, 0] * pts[:, 1]
    pr = make_problem("dziuk")
    assert np.abs(pr.f(pts) - ref).max() <= 1e-6 * np.abs(ref).max()
    assert np.abs(-dziuk_surface_divergence(pts) - (-lap_s)).max() <= 1e-6


def test_rhs_is_cp_extension(circle_grid, circle_problem):
    g = circle_grid
    theta = np.arctan2(g.cp[:, 1], g.cp[:, 0])
    assert np.allclose(circle_problem.rhs(g), circle_problem.f(g.cp, theta))


def test_extension_invariance_of_rhs():
    pr = make_problem("circle")
    errs = []
    for dx in (0.05, 0.025):
        g = build_band(pr.surface, dx)
        f = pr.rhs(g)
        errs.append(np.abs(build_extension(g, 3) @ f - f).max() / np.abs(f).max())
    assert 11 <= errs[0] / errs[1] <= 22


def test_surface_error_floor(circle_problem):
    # cubic interpolation of the exact extension: a fourth-order floor
    g1 = build_band(circle_problem.surface, 0.05)
    g2 = build_band(circle_problem.surface, 0.025)
    e1 = surface_error(g1, circle_problem.exact_extension(g1), circle_problem)
    e2 = surface_error(g2, circle_problem.exact_extension(g2), circle_problem)
    assert e1 == pytest.approx(1.5064e-3, rel=0.02)
    assert 12 <= e1 / e2 <= 20


def test_surface_error_offset(circle_problem):
    g = build_band(circle_problem.surface, 0.0125)
    probe = SurfaceErrorProbe(g, circle_problem)
    e = probe(circle_problem.exact_extension(g) + 0.01)
    assert e == pytest.approx(0.01 / probe.scale, rel=0.1)


def test_surface_error_reference_value(circle_problem):
    g = build_band(circle_problem.surface, 0.0125)
    ops = assemble_operators(g)
    u = direct_solve(ops.A, circle_problem.rhs(g))
    assert surface_error(g, ops.E_q @ u, circle_problem) == pytest.approx(1.19e-3, rel=0.2)


def test_error_sample_counts():
    assert len(make_problem("circle").error_samples()[0]) == 1000
    assert len(make_problem("torus").error_samples()[0]) == 10000
    assert len(make_problem("sphere_harmonic").error_samples()[0]) == 10000
    assert len(make_problem("dziuk").error_samples()[0]) == 10000
