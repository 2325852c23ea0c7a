"""Manufactured test problems and the surface error metric.

Each problem solves ``-div_S(a grad_S u) + c u = f`` on a closed surface
with a known exact solution.  Callbacks take ``(points, params)`` where
``params`` are the surface coordinates carried by :class:`CpResult`.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import geometry
from .errors import UnknownProblem
from .operators import interp_matrix

PROBLEMS = ("circle", "bean", "sphere_harmonic", "torus", "dziuk", "sphere_varcoef")


@dataclass(frozen=True)
class Problem:
    name: str
    surface: geometry.Surface
    c: float
    u: Callable
    f: Callable
    error_samples: Callable      # () -> (points, params)
    a: Optional[Callable] = None

    def rhs(self, grid):
        """Closest-point extension of ``f`` onto the band."""
        return self.f(grid.cp, grid.param)

    def exact_extension(self, grid):
        return self.u(grid.cp, grid.param)

    def diffusivity(self, grid):
        return None if self.a is None else self.a(grid.cp, grid.param)


def _col(params, k):
    return np.asarray(params)[..., k]


def _circle(c=1.0, radius=1.0):
    S = geometry.Circle(radius)

    def u(x, t):
        return np.sin(t) + np.sin(12 * t)

    def f(x, t):
        return (np.sin(t) + 144 * np.sin(12 * t)) / radius ** 2 + c * u(x, t)

    def samples(n=1000):
        return S.samples(n)

    return Problem("circle", S, c, u, f, samples)


def bean_rhs_parts(curve, t):
    """``(u, Laplace-Beltrami of u)`` on the spline, in arclength form."""
    T = curve.T
    w1, w2 = 2 * np.pi / T, 20 * np.pi / T
    u = np.sin(w1 * t) + np.sin(w2 * t)
    du = w1 * np.cos(w1 * t) + w2 * np.cos(w2 * t)
    d2u = -w1 ** 2 * np.sin(w1 * t) - w2 ** 2 * np.sin(w2 * t)
    X1 = curve.evaluate(t, 1)
    X2 = curve.evaluate(t, 2)
    sp_ = np.linalg.norm(X1, axis=-1)
    spp = np.sum(X1 * X2, axis=-1) / sp_
    lap = d2u / sp_ ** 2 - du * spp / sp_ ** 3
    return u, lap


def _bean(c=1.0, control_points=None):
    S = geometry.SplineCurve() if control_points is None else geometry.SplineCurve(control_points)

    def u(x, t):
        return bean_rhs_parts(S, t)[0]

    def f(x, t):
        uu, lap = bean_rhs_parts(S, t)
        return -lap + c * uu

    def samples(n=1000):
        return S.samples(n)

    return Problem("bean", S, c, u, f, samples)


def _sphere_grid(n=100, periodic_phi=False):
    theta = 2 * np.pi * np.arange(n) / n
    phi = 2 * np.pi * np.arange(n) / n if periodic_phi else np.linspace(0, np.pi, n)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    return T.ravel(), P.ravel()


def _sphere_harmonic(c=1.0):
    S = geometry.Sphere()
    # degree-5 harmonic: -Lap_S u = 30 u on the unit sphere
    def u(x, tp):
        th, ph = _col(tp, 0), _col(tp, 1)
        return np.cos(3 * th) * np.sin(ph) ** 3 * (9 * np.cos(ph) ** 2 - 1)

    def f(x, tp):
        return (30.0 + c) * u(x, tp)

    def samples(n=100):
        th, ph = _sphere_grid(n)
        return S.from_params(th, ph), np.stack([th, ph], axis=1)

    return Problem("sphere_harmonic", S, c, u, f, samples)


def _torus(c=1.0, R=1.2, r=0.6):
    S = geometry.Torus(R, r)

    def u(x, tp):
        return np.sin(3 * _col(tp, 0)) + np.cos(2 * _col(tp, 1))

    def f(x, tp):
        th, ph = _col(tp, 0), _col(tp, 1)
        rho = R + r * np.cos(ph)
        return (9 * np.sin(3 * th) / rho ** 2
                - 2 * np.sin(ph) * np.sin(2 * ph) / (r * rho)
                + 4 * np.cos(2 * ph) / r ** 2
                + c * u(x, tp))

    def samples(n=100):
        th, ph = _sphere_grid(n, periodic_phi=True)
        return S.from_params(th, ph), np.stack([th, ph], axis=1)

    return Problem("torus", S, c, u, f, samples)


def _dziuk_v(x):
    """Tangential gradient of ``x1 x2`` using the normalized level-set gradient."""
    g = np.stack([x[..., 1], x[..., 0], np.zeros_like(x[..., 0])], axis=-1)
    n = geometry.DziukSurface.grad_phi(x)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return g - np.sum(g * n, axis=-1, keepdims=True) * n


def dziuk_surface_divergence(x, h=1e-5):
    """``div_S v`` by central differences of ``v`` on the analytic extension."""
    x = np.atleast_2d(x)
    J = np.empty(x.shape + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J[:, :, k] = (_dziuk_v(x + e) - _dziuk_v(x - e)) / (2 * h)
    n = geometry.DziukSurface.normal(x)
    return np.trace(J, axis1=1, axis2=2) - np.einsum("mj,mjk,mk->m", n, J, n)


def _dziuk(c=1.0):
    S = geometry.DziukSurface()

    def u(x, tp=None):
        x = np.atleast_2d(x)
        return x[:, 0] * x[:, 1]

    def f(x, tp=None):
        return -dziuk_surface_divergence(x) + c * u(x)

    def samples(n=10000):
        return S.samples(n)

    return Problem("dziuk", S, c, u, f, samples)


def _sphere_varcoef(c=1.0):
    S = geometry.Sphere()

    def u(x, tp):
        return np.cos(_col(tp, 1))

    def a(x, tp):
        return np.cos(_col(tp, 1)) + 1.5

    def f(x, tp):
        ph = _col(tp, 1)
        return 2 * np.cos(ph) * (np.cos(ph) + 1.5) - np.sin(ph) ** 2 + c * np.cos(ph)

    def samples(n=100):
        th, ph = _sphere_grid(n)
        return S.from_params(th, ph), np.stack([th, ph], axis=1)

    return Problem("sphere_varcoef", S, c, u, f, samples, a=a)


_FACTORIES = {
    "circle": _circle,
    "bean": _bean,
    "sphere_harmonic": _sphere_harmonic,
    "torus": _torus,
    "dziuk": _dziuk,
    "sphere_varcoef": _sphere_varcoef,
}


def make_problem(name, **params):
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    return factory(**params)


class SurfaceErrorProbe:
    """Precomputed cubic interpolation from a grid to the error sample points."""

    def __init__(self, grid, problem, n_samples=None):
        pts, prm = problem.error_samples() if n_samples is None else problem.error_samples(n_samples)
        self.W = interp_matrix(grid, pts, 3)
        self.exact = problem.u(pts, prm)
        self.scale = np.abs(self.exact).max()

    def __call__(self, u_h):
        return float(np.abs(self.W @ u_h - self.exact).max() / self.scale)


def surface_error(grid, u_h, problem, n_samples=None):
    """Relative max-norm error of the cubic interpolant of ``u_h`` on the surface."""
    return SurfaceErrorProbe(grid, problem, n_samples)(u_h)
