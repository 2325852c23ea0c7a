"""Closest-point representations of curves and surfaces.

Every surface exposes the same small interface:

* ``closest_point(x, strict=True)`` for an ``(m, d)`` or ``(d,)`` array,
  returning a :class:`CpResult`;
* ``samples(n)`` returning ``(points, params)`` exactly on the surface;
* ``normal(y)`` for points on the surface;
* ``approx_distance(x)`` and ``approx_error``, a cheap distance estimate
  used only to prune candidate grid nodes before exact queries.

Closest points of the analytic surfaces are closed-form radial
projections.  The spline curve and the level-set surface use Newton's
method on the squared distance, seeded from dense surface samples, and
keep the best of several local minima.

Surfaces are immutable after construction.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import MedialAxis, NoConvergence, Unsupported

CP_TOL = 1e-10
NEWTON_GTOL = 1e-12

# A bean-like closed curve: a convex back, a dent on top.
BEAN_CONTROL_POINTS = np.array([
    [-1.00, 0.05],
    [-0.90, 0.42],
    [-0.60, 0.66],
    [-0.30, 0.62],
    [0.00, 0.54],
    [0.30, 0.62],
    [0.60, 0.66],
    [0.90, 0.42],
    [1.00, 0.05],
    [0.85, -0.38],
    [0.45, -0.60],
    [0.00, -0.66],
    [-0.45, -0.60],
    [-0.85, -0.38],
])


@dataclass(frozen=True)
class CpResult:
    """Closest points of a batch of query points.

    ``cp`` has the shape of the query; ``dist`` drops the last axis.
    ``param`` holds surface coordinates (``t`` for curves, ``(theta, phi)``
    for sphere, torus and the level-set surface), or None.
    """
    cp: np.ndarray
    dist: np.ndarray
    param: Optional[np.ndarray] = None


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x, single


def _unbatch(res, single):
    if not single:
        return res
    param = None if res.param is None else res.param[0]
    return CpResult(res.cp[0], res.dist[0], param)


class Surface:
    dim = None
    name = None

    def closest_point(self, x, strict=True):
        x, single = _as_batch(x, self.dim)
        return _unbatch(self._cp(x, strict), single)

    def samples(self, n):
        raise NotImplementedError

    def normal(self, y):
        raise Unsupported(f"{self.name}: normals are not available")

    def bbox(self):
        raise NotImplementedError

    def residual(self, y):
        """Defining-equation residual at points ``y`` (zero on the surface)."""
        raise NotImplementedError

    def approx_distance(self, x):
        return self._cp(np.atleast_2d(x), strict=False).dist

    approx_error = 0.0


# ---------------------------------------------------------------- analytic


class Circle(Surface):
    dim = 2
    name = "circle"

    def __init__(self, radius=1.0, center=(0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def _cp(self, x, strict):
        w = x - self.center
        rho = np.linalg.norm(w, axis=1)
        bad = rho <= CP_TOL
        if strict and bad.any():
            raise MedialAxis("circle center has no unique closest point")
        e = np.where(bad[:, None], [1.0, 0.0], w / np.where(bad, 1.0, rho)[:, None])
        cp = self.center + self.radius * e
        theta = np.arctan2(e[:, 1], e[:, 0])
        return CpResult(cp, np.abs(rho - self.radius), theta)

    def approx_distance(self, x):
        return np.abs(np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) - self.radius)

    def from_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.center + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def samples(self, n):
        theta = 2 * np.pi * np.arange(n) / n
        return self.from_params(theta), theta

    def normal(self, y):
        w = np.asarray(y, dtype=float) - self.center
        return w / np.linalg.norm(w, axis=-1, keepdims=True)

    def residual(self, y):
        return np.linalg.norm(np.asarray(y) - self.center, axis=-1) - self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius


def _sphere_angles(e):
    theta = np.arctan2(e[:, 1], e[:, 0])
    phi = np.arccos(np.clip(e[:, 2], -1.0, 1.0))
    return np.stack([theta, phi], axis=1)


def _sphere_point(theta, phi):
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=-1)


def _fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    theta = np.mod(np.pi * (3.0 - np.sqrt(5.0)) * np.arange(n), 2 * np.pi)
    phi = np.arccos(z)
    return theta, phi


class Sphere(Surface):
    dim = 3
    name = "sphere"

    def __init__(self, radius=1.0, center=(0.0, 0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def _cp(self, x, strict):
        w = x - self.center
        rho = np.linalg.norm(w, axis=1)
        bad = rho <= CP_TOL
        if strict and bad.any():
            raise MedialAxis("sphere center has no unique closest point")
        e = np.where(bad[:, None], [0.0, 0.0, 1.0], w / np.where(bad, 1.0, rho)[:, None])
        return CpResult(self.center + self.radius * e, np.abs(rho - self.radius),
                        _sphere_angles(e))

    def approx_distance(self, x):
        return np.abs(np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) - self.radius)

    def from_params(self, theta, phi):
        return self.center + self.radius * _sphere_point(np.asarray(theta, float),
                                                         np.asarray(phi, float))

    def samples(self, n):
        theta, phi = _fibonacci_sphere(n)
        return self.from_params(theta, phi), np.stack([theta, phi], axis=1)

    def normal(self, y):
        w = np.asarray(y, dtype=float) - self.center
        return w / np.linalg.norm(w, axis=-1, keepdims=True)

    def residual(self, y):
        return np.linalg.norm(np.asarray(y) - self.center, axis=-1) - self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius


class Torus(Surface):
    """Torus with tube-center radius ``R`` and tube radius ``r``, axis along z."""

    dim = 3
    name = "torus"

    def __init__(self, R=1.2, r=0.6, center=(0.0, 0.0, 0.0)):
        if not 0 < r < R:
            raise ValueError("torus needs 0 < r < R")
        self.R = float(R)
        self.r = float(r)
        self.center = np.asarray(center, dtype=float)

    def _split(self, x, strict):
        w = x - self.center
        rho = np.hypot(w[:, 0], w[:, 1])
        on_axis = rho <= CP_TOL
        theta = np.where(on_axis, 0.0, np.arctan2(w[:, 1], w[:, 0]))
        er = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
        q = self.R * er
        v = w - q
        vn = np.linalg.norm(v, axis=1)
        on_core = vn <= CP_TOL
        if strict and (on_axis.any() or on_core.any()):
            raise MedialAxis("point on the torus symmetry axis or tube core circle")
        ev = np.where(on_core[:, None], er, v / np.where(on_core, 1.0, vn)[:, None])
        return theta, q, ev, vn

    def _cp(self, x, strict):
        theta, q, ev, vn = self._split(x, strict)
        er = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        phi = np.arctan2(ev[:, 2], np.sum(ev[:, :2] * er, axis=1))
        cp = self.center + q + self.r * ev
        return CpResult(cp, np.abs(vn - self.r), np.stack([theta, phi], axis=1))

    def approx_distance(self, x):
        w = np.atleast_2d(x) - self.center
        return np.abs(np.hypot(np.hypot(w[:, 0], w[:, 1]) - self.R, w[:, 2]) - self.r)

    def from_params(self, theta, phi):
        theta = np.asarray(theta, float)
        phi = np.asarray(phi, float)
        a = self.R + self.r * np.cos(phi)
        return self.center + np.stack([a * np.cos(theta), a * np.sin(theta),
                                       self.r * np.sin(phi)], axis=-1)

    def samples(self, n):
        theta = 2 * np.pi * np.arange(n) / n
        phi = np.mod(2 * np.pi * np.arange(n) * (np.sqrt(5.0) - 1) / 2, 2 * np.pi)
        return self.from_params(theta, phi), np.stack([theta, phi], axis=1)

    def normal(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        _, _, ev, _ = self._split(y, strict=True)
        return ev if np.ndim(y) > 1 else ev[0]

    def residual(self, y):
        w = np.atleast_2d(y) - self.center
        return np.hypot(np.hypot(w[:, 0], w[:, 1]) - self.R, w[:, 2]) - self.r

    def bbox(self):
        a = self.R + self.r
        return self.center - [a, a, self.r], self.center + [a, a, self.r]


# ---------------------------------------------------------------- Newton-based


class SplineCurve(Surface):
    """Closed C2 periodic cubic spline through control points.

    Parametrized by cumulative chord length; the period is ``T``.
    """

    dim = 2
    name = "spline_curve"
    n_dense = 4096
    n_seeds = 3

    def __init__(self, control_points=BEAN_CONTROL_POINTS):
        pts = np.asarray(control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise ValueError("need at least 4 control points in 2D")
        closed = np.vstack([pts, pts[:1]])
        t = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
        self.control_points = pts
        self.T = float(t[-1])
        self.spline = CubicSpline(t, closed, bc_type="periodic")
        self._t_dense = self.T * np.arange(self.n_dense) / self.n_dense
        self._x_dense = self.spline(self._t_dense)
        self._tree = cKDTree(self._x_dense)
        self._dt = self.T / self.n_dense
        speed = np.linalg.norm(self.spline(self._t_dense, 1), axis=1)
        self.approx_error = float(self._dt * speed.max())

    @classmethod
    def from_file(cls, path):
        """Load control points from a text file of ``x y`` rows."""
        return cls(np.loadtxt(path, ndmin=2))

    def evaluate(self, t, nu=0):
        return self.spline(np.mod(t, self.T), nu)

    def approx_distance(self, x):
        d, _ = self._tree.query(np.atleast_2d(x))
        return d

    def _newton(self, p, t):
        """Minimize |X(t) - p|^2 over t; returns (t, converged)."""
        done = np.zeros(len(t), dtype=bool)
        for _ in range(60):
            X = self.evaluate(t)
            X1 = self.evaluate(t, 1)
            X2 = self.evaluate(t, 2)
            r = X - p
            g = np.sum(r * X1, axis=1)
            done = np.abs(g) <= NEWTON_GTOL
            if done.all():
                break
            h = np.sum(X1 * X1, axis=1) + np.sum(r * X2, axis=1)
            h = np.where(h > 0, h, np.sum(X1 * X1, axis=1))
            step = np.clip(-g / h, -2 * self._dt, 2 * self._dt)
            t = np.where(done, t, t + step)
        return np.mod(t, self.T), done

    def _cp(self, x, strict):
        m = len(x)
        cps = np.empty((m, 2))
        dist = np.empty(m)
        ts = np.empty(m)
        chunk = 512
        k = self.n_seeds
        for s in range(0, m, chunk):
            p = x[s:s + chunk]
            d2 = np.sum((p[:, None, :] - self._x_dense[None, :, :]) ** 2, axis=2)
            locmin = (d2 <= np.roll(d2, 1, axis=1)) & (d2 <= np.roll(d2, -1, axis=1))
            d2 = np.where(locmin, d2, np.inf)
            kk = min(k, d2.shape[1])
            idx = np.argpartition(d2, kk - 1, axis=1)[:, :kk]
            valid = np.isfinite(np.take_along_axis(d2, idx, axis=1))
            t0 = self._t_dense[idx].ravel()
            pp = np.repeat(p, kk, axis=0)
            t, ok = self._newton(pp, t0)
            X = self.evaluate(t)
            dd = np.linalg.norm(X - pp, axis=1).reshape(-1, kk)
            ok = ok.reshape(-1, kk) & valid
            if not ok.any(axis=1).all():
                raise NoConvergence("spline closest point: Newton failed from all seeds")
            dd = np.where(ok, dd, np.inf)
            best = np.argmin(dd, axis=1)
            rows = np.arange(len(p))
            X = X.reshape(-1, kk, 2)
            t = t.reshape(-1, kk)
            if strict and kk > 1:
                order = np.sort(dd, axis=1)
                second = np.argsort(dd, axis=1)[:, 1]
                far = np.linalg.norm(X[rows, best] - X[rows, second], axis=1) > 1e-6
                if np.any(far & (order[:, 1] - order[:, 0] <= CP_TOL)):
                    raise MedialAxis("point is equidistant from two arcs of the curve")
            cps[s:s + chunk] = X[rows, best]
            dist[s:s + chunk] = dd[rows, best]
            ts[s:s + chunk] = t[rows, best]
        return CpResult(cps, dist, ts)

    def samples(self, n):
        t = self.T * np.arange(n) / n
        return self.evaluate(t), t

    def residual(self, y):
        return self._cp(np.atleast_2d(np.asarray(y, dtype=float)), strict=False).dist

    def bbox(self):
        return self._x_dense.min(axis=0), self._x_dense.max(axis=0)


class DziukSurface(Surface):
    """Level set ``(x1 - x3^2)^2 + x2^2 + x3^2 = 1``.

    The map ``y -> (y1 + y3^2, y2, y3)`` sends the unit sphere onto it, which
    gives exact samples and ``(theta, phi)`` coordinates.
    """

    dim = 3
    name = "dziuk"
    n_dense = 40000
    n_seeds = 6

    def __init__(self):
        theta, phi = _fibonacci_sphere(self.n_dense)
        self._x_dense = self.from_params(theta, phi)
        self._tree = cKDTree(self._x_dense)
        d, _ = self._tree.query(self._x_dense, k=2)
        self.approx_error = float(d[:, 1].max())

    @staticmethod
    def phi(x):
        x = np.asarray(x, dtype=float)
        w = x[..., 0] - x[..., 2] ** 2
        return w ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2 - 1.0

    @staticmethod
    def grad_phi(x):
        x = np.asarray(x, dtype=float)
        w = x[..., 0] - x[..., 2] ** 2
        return 2 * np.stack([w, x[..., 1], x[..., 2] * (1 - 2 * w)], axis=-1)

    @staticmethod
    def hess_phi(x):
        w = x[:, 0] - x[:, 2] ** 2
        H = np.zeros((len(x), 3, 3))
        H[:, 0, 0] = 2.0
        H[:, 1, 1] = 2.0
        H[:, 0, 2] = H[:, 2, 0] = -4 * x[:, 2]
        H[:, 2, 2] = 2 - 4 * w + 8 * x[:, 2] ** 2
        return H

    residual = phi

    @staticmethod
    def from_params(theta, phi):
        y = _sphere_point(np.asarray(theta, float), np.asarray(phi, float))
        x = y.copy()
        x[..., 0] = y[..., 0] + y[..., 2] ** 2
        return x

    @staticmethod
    def to_params(x):
        x = np.atleast_2d(x)
        y = np.stack([x[:, 0] - x[:, 2] ** 2, x[:, 1], x[:, 2]], axis=1)
        y /= np.linalg.norm(y, axis=1, keepdims=True)
        return _sphere_angles(y)

    def samples(self, n):
        theta, phi = _fibonacci_sphere(n)
        return self.from_params(theta, phi), np.stack([theta, phi], axis=1)

    @staticmethod
    def normal(y):
        y = np.asarray(y, dtype=float)
        x1, x2, x3 = y[..., 0], y[..., 1], y[..., 2]
        w = x1 - x3 ** 2
        num = np.stack([w, x2, x3 * (1 - 2 * w)], axis=-1)
        den = np.sqrt(1 + 4 * x3 ** 2 * (1 - x1 - x2 ** 2))
        return num / den[..., None]

    def approx_distance(self, x):
        d, _ = self._tree.query(np.atleast_2d(x))
        return d

    def _newton(self, x, y):
        """Constrained Newton on the Lagrangian of min |y-x|^2 s.t. phi(y)=0."""
        G = self.grad_phi(y)
        mu = -np.sum((y - x) * G, axis=1) / np.sum(G * G, axis=1)
        ok = np.zeros(len(x), dtype=bool)
        for _ in range(50):
            G = self.grad_phi(y)
            F = np.concatenate([y - x + mu[:, None] * G, self.phi(y)[:, None]], axis=1)
            ok = np.abs(F).max(axis=1) <= NEWTON_GTOL
            if ok.all():
                break
            J = np.zeros((len(x), 4, 4))
            J[:, :3, :3] = np.eye(3) + mu[:, None, None] * self.hess_phi(y)
            J[:, :3, 3] = G
            J[:, 3, :3] = G
            with np.errstate(all="ignore"):
                try:
                    step = np.linalg.solve(J, -F[..., None])[..., 0]
                except np.linalg.LinAlgError:
                    step = np.stack([np.linalg.lstsq(Ji, -Fi, rcond=None)[0]
                                     for Ji, Fi in zip(J, F)])
            step = np.where(np.isfinite(step), step, 0.0)
            # cap wild steps; seeds are already close to a minimizer
            nrm = np.linalg.norm(step[:, :3], axis=1)
            scale = np.minimum(1.0, 0.25 / np.maximum(nrm, 1e-300))[:, None]
            step = step * scale
            y = np.where(ok[:, None], y, y + step[:, :3])
            mu = np.where(ok, mu, mu + step[:, 3])
        return y, ok

    def _cp(self, x, strict):
        m = len(x)
        k = self.n_seeds
        cps = np.empty((m, 3))
        dist = np.empty(m)
        chunk = 20000
        for s in range(0, m, chunk):
            p = x[s:s + chunk]
            d0, idx = self._tree.query(p, k=k)
            pp = np.repeat(p, k, axis=0)
            y, ok = self._newton(pp, self._x_dense[idx.ravel()])
            dd = np.linalg.norm(y - pp, axis=1).reshape(-1, k)
            # a converged stationary point farther than the seed is not a minimizer
            ok = ok.reshape(-1, k) & (dd <= d0 + 1e-9)
            if not ok.any(axis=1).all():
                raise NoConvergence("level-set closest point: Newton failed from all seeds")
            dd = np.where(ok, dd, np.inf)
            best = np.argmin(dd, axis=1)
            rows = np.arange(len(p))
            y = y.reshape(-1, k, 3)
            if strict:
                srt = np.argsort(dd, axis=1)
                a, b = srt[:, 0], srt[:, 1]
                far = np.linalg.norm(y[rows, a] - y[rows, b], axis=1) > 1e-6
                tie = np.isfinite(dd[rows, b]) & (dd[rows, b] - dd[rows, a] <= CP_TOL)
                if np.any(far & tie):
                    raise MedialAxis("point is equidistant from two regions of the surface")
            cps[s:s + chunk] = y[rows, best]
            dist[s:s + chunk] = dd[rows, best]
        return CpResult(cps, dist, self.to_params(cps))

    def bbox(self):
        return np.array([-1.0, -1.0, -1.0]), np.array([1.25, 1.0, 1.0])


# ---------------------------------------------------------------- module API


def make_surface(kind, **kw):
    kinds = {"circle": Circle, "sphere": Sphere, "torus": Torus,
             "spline_curve": SplineCurve, "bean": SplineCurve, "dziuk": DziukSurface}
    try:
        return kinds[kind](**kw)
    except KeyError:
        raise ValueError(f"unknown surface kind {kind!r}") from None


def closest_point(surface, x, strict=True):
    return surface.closest_point(x, strict=strict)


def surface_samples(surface, n):
    if n < 1:
        raise ValueError("n must be >= 1")
    return surface.samples(n)


def normal(surface, y):
    return surface.normal(y)
