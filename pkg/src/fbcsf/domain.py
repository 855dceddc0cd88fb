"""Convex planar domains with C^2 boundary.

Every domain answers the same queries: the boundary frame at an arclength
parameter ``s`` (point, unit tangent ``T^S``, outward unit normal ``N^S`` and
curvature ``kappa^S``), nearest-point projection, and an interior test.

Conventions: ``J`` is counterclockwise rotation by pi/2 and ``T^S = J N^S``,
so bounded boundaries are traversed counterclockwise and ``kappa^S >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ellipe, ellipeinc

__all__ = [
    "GeometryError",
    "DegenerateConfigurationError",
    "BoundaryFrame",
    "AngleData",
    "ConvexDomain",
    "HalfPlane",
    "Disk",
    "Ellipse",
    "SampledDomain",
    "boundary_frame",
    "project_to_boundary",
    "angles_at",
    "domain_from_spec",
    "rot90",
]


class GeometryError(ValueError):
    """Invalid geometric input (non-finite values, non-convex data, ...)."""


class DegenerateConfigurationError(GeometryError):
    """An angle or direction is undefined because two points coincide."""


def rot90(v):
    """Counterclockwise rotation ``J`` by pi/2 (acts on the last axis)."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _outward_from_tangent(t):
    # N^S = -J T^S
    return np.stack([t[..., 1], -t[..., 0]], axis=-1)


@dataclass(frozen=True)
class BoundaryFrame:
    s: float
    point: np.ndarray
    tangent: np.ndarray
    outward_normal: np.ndarray
    curvature: float
    distance: float = 0.0  # filled in by projection queries


def _newton_minimize(grad_hess, s0, lo, hi, tol, max_iter=60):
    """Safeguarded Newton for a 1D minimum inside ``[lo, hi]`` (vectorized).

    ``grad_hess(s)`` returns first and second derivatives of the objective.
    Steps leaving the bracket or taken with non-positive curvature fall back
    to bisection on the sign of the derivative.
    """
    s = np.array(s0, dtype=float, copy=True)
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(max_iter):
        g, h = grad_hess(s)
        hi = np.where(g > 0, s, hi)
        lo = np.where(g <= 0, s, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            s_new = s - g / h
        bad = ~np.isfinite(s_new) | (h <= 0) | (s_new <= lo) | (s_new >= hi)
        s_new = np.where(bad, 0.5 * (lo + hi), s_new)
        done = np.abs(s_new - s) <= tol
        s = s_new
        if np.all(done):
            break
    return s


class ConvexDomain:
    """Base class. Subclasses implement :meth:`_eval` and usually projection."""

    kind: str = "abstract"
    boundary_length: float = math.inf

    # -- boundary evaluation -------------------------------------------------
    def _eval(self, s):
        """Return ``(point, tangent, outward_normal, curvature)`` arrays."""
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.boundary_length)

    @property
    def scale(self) -> float:
        """Characteristic length used for relative tolerances."""
        return 1.0

    def wrap(self, s):
        if self.bounded:
            return np.mod(s, self.boundary_length)
        return np.asarray(s, dtype=float)

    def frame(self, s: float) -> BoundaryFrame:
        s = float(s)
        if not math.isfinite(s):
            raise GeometryError(f"boundary parameter must be finite, got {s!r}")
        s = float(self.wrap(s))
        p, t, n, k = self._eval(np.array([s]))
        return BoundaryFrame(s=s, point=p[0], tangent=t[0], outward_normal=n[0], curvature=float(k[0]))

    def points(self, s):
        return self._eval(np.asarray(s, dtype=float))[0]

    def sample(self, n: int):
        """``n`` boundary parameters, uniform in arclength (bounded kinds only)."""
        if not self.bounded:
            raise GeometryError("cannot sample an unbounded boundary uniformly")
        return np.arange(n) * (self.boundary_length / n)

    def normal_angle(self, s):
        n = self._eval(np.atleast_1d(np.asarray(s, dtype=float)))[2]
        return np.arctan2(n[..., 1], n[..., 0])

    # -- projection ----------------------------------------------------------
    def project(self, x, s_guess=None):
        """Nearest boundary parameters and distances for points ``x`` (..., 2)."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise GeometryError("projection input must be finite")
        flat = x.reshape(-1, 2)
        s, d = self._project(flat, s_guess)
        return s.reshape(x.shape[:-1]), d.reshape(x.shape[:-1])

    def _project(self, x, s_guess):
        # multi-start over the coarsest samples, then safeguarded Newton
        n0 = 64
        grid = self.sample(n0)
        h = self.boundary_length / n0
        pts = self.points(grid)
        d2 = np.sum((x[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        k = np.argmin(d2, axis=1)
        s0 = grid[k]
        if s_guess is not None:
            s_guess = np.broadcast_to(np.asarray(s_guess, dtype=float), s0.shape)
            d_guess = np.sum((x - self.points(s_guess)) ** 2, axis=-1)
            use = d_guess <= d2[np.arange(len(k)), k]
            s0 = np.where(use, s_guess, s0)

        def grad_hess(s):
            p, t, n, kap = self._eval(s)
            r = x - p
            g = -2.0 * np.sum(r * t, axis=-1)
            hh = 2.0 + 2.0 * kap * np.sum(r * n, axis=-1)
            return g, hh

        s = _newton_minimize(grad_hess, s0, s0 - h, s0 + h, tol=1e-14 * max(1.0, self.boundary_length))
        s = self.wrap(s)
        d = np.linalg.norm(x - self.points(s), axis=-1)
        return s, d

    def foot_parameter(self, x, s_guess: float) -> float:
        """Solve ``cross(x - zeta(s), N^S(s)) = 0`` for ``s`` by Newton from ``s_guess``.

        This places ``x - zeta(s)`` along the normal line at ``zeta(s)``.
        """
        x = np.asarray(x, dtype=float)
        s = float(s_guess)
        for _ in range(50):
            p, t, n, k = self._eval(np.array([s]))
            r = x - p[0]
            g = -(r[0] * t[0, 0] + r[1] * t[0, 1])
            dg = 1.0 + k[0] * (r[0] * n[0, 0] + r[1] * n[0, 1])
            if dg <= 0.0:
                raise GeometryError("endpoint solve diverged (focal configuration)")
            step = g / dg
            s -= step
            if abs(step) <= 1e-15 * max(1.0, abs(s)):
                break
        else:
            raise GeometryError("endpoint solve did not converge")
        return float(self.wrap(s))

    def distance_to_boundary(self, x):
        return self.project(x)[1]

    # -- membership ----------------------------------------------------------
    def contains(self, x, margin: float = 0.0):
        """Strict interior test with a safety margin."""
        raise NotImplementedError

    # -- transformations -----------------------------------------------------
    def translated(self, v) -> "ConvexDomain":
        raise NotImplementedError

    def scaled(self, lam: float) -> "ConvexDomain":
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    def max_curvature_near(self, s_values, radius: float) -> float:
        """sup of ``kappa^S`` over boundary arcs within ``radius`` of the given parameters."""
        s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
        if self.bounded and radius >= self.boundary_length / 2:
            grid = self.sample(2048)
        else:
            offs = np.linspace(-radius, radius, 257)
            grid = (s_values[:, None] + offs[None, :]).ravel()
        return float(np.max(self._eval(grid)[3]))


@dataclass(frozen=True, eq=False)
class HalfPlane(ConvexDomain):
    """``{y >= c_y}``; the boundary parameter is the signed ``x`` offset."""

    center: tuple = (0.0, 0.0)
    kind = "half_plane"
    boundary_length = math.inf

    def _eval(self, s):
        s = np.asarray(s, dtype=float)
        cx, cy = self.center
        p = np.stack([cx + s, np.full_like(s, cy)], axis=-1)
        t = np.broadcast_to(np.array([1.0, 0.0]), p.shape).copy()
        n = np.broadcast_to(np.array([0.0, -1.0]), p.shape).copy()
        return p, t, n, np.zeros_like(s)

    def frame(self, s: float) -> BoundaryFrame:
        s = float(s)
        if not math.isfinite(s):
            raise GeometryError(f"boundary parameter must be finite, got {s!r}")
        cx, cy = self.center
        return BoundaryFrame(s, np.array([cx + s, cy]), np.array([1.0, 0.0]), np.array([0.0, -1.0]), 0.0)

    def _project(self, x, s_guess):
        return x[:, 0] - self.center[0], np.abs(x[:, 1] - self.center[1])

    def foot_parameter(self, x, s_guess):
        return float(x[0] - self.center[0])

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        return x[..., 1] - self.center[1] > margin

    def mirror(self, y):
        y = np.array(y, dtype=float, copy=True)
        y[..., 1] = 2.0 * self.center[1] - y[..., 1]
        return y

    def translated(self, v):
        return HalfPlane((self.center[0] + v[0], self.center[1] + v[1]))

    def scaled(self, lam):
        return HalfPlane((lam * self.center[0], lam * self.center[1]))

    def max_curvature_near(self, s_values, radius):
        return 0.0

    def spec(self):
        return {"kind": "half_plane", "center": list(self.center)}


@dataclass(frozen=True, eq=False)
class Disk(ConvexDomain):
    radius: float = 1.0
    center: tuple = (0.0, 0.0)
    kind = "disk"

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError("disk radius must be positive and finite")

    @property
    def boundary_length(self):
        return 2.0 * math.pi * self.radius

    @property
    def scale(self):
        return self.radius

    def _eval(self, s):
        s = np.asarray(s, dtype=float)
        a = s / self.radius
        c, sn = np.cos(a), np.sin(a)
        n = np.stack([c, sn], axis=-1)
        p = np.asarray(self.center) + self.radius * n
        t = np.stack([-sn, c], axis=-1)
        return p, t, n, np.full_like(s, 1.0 / self.radius)

    def frame(self, s: float) -> BoundaryFrame:
        s = float(s)
        if not math.isfinite(s):
            raise GeometryError(f"boundary parameter must be finite, got {s!r}")
        s = s % self.boundary_length
        a = s / self.radius
        c, sn = math.cos(a), math.sin(a)
        cx, cy = self.center
        r = self.radius
        return BoundaryFrame(s, np.array([cx + r * c, cy + r * sn]), np.array([-sn, c]), np.array([c, sn]), 1.0 / r)

    def _project(self, x, s_guess):
        r = x - np.asarray(self.center)
        rho = np.hypot(r[:, 0], r[:, 1])
        ang = np.mod(np.arctan2(r[:, 1], r[:, 0]), 2.0 * math.pi)
        return ang * self.radius, np.abs(self.radius - rho)

    def foot_parameter(self, x, s_guess):
        r = np.asarray(x, dtype=float) - np.asarray(self.center)
        if r[0] == 0.0 and r[1] == 0.0:
            raise GeometryError("endpoint solve undefined at the disk center")
        return (math.atan2(r[1], r[0]) % (2.0 * math.pi)) * self.radius

    def contains(self, x, margin=0.0):
        r = np.asarray(x, dtype=float) - np.asarray(self.center)
        return np.hypot(r[..., 0], r[..., 1]) < self.radius - margin

    def translated(self, v):
        return Disk(self.radius, (self.center[0] + v[0], self.center[1] + v[1]))

    def scaled(self, lam):
        return Disk(lam * self.radius, (lam * self.center[0], lam * self.center[1]))

    def max_curvature_near(self, s_values, radius):
        return 1.0 / self.radius

    def spec(self):
        return {"kind": "disk", "radius": self.radius, "center": list(self.center)}


@dataclass(frozen=True, eq=False)
class Ellipse(ConvexDomain):
    """Axis-aligned ellipse; ``s = 0`` is the vertex ``(c_x + a, c_y)``."""

    a: float = 2.0
    b: float = 1.0
    center: tuple = (0.0, 0.0)
    kind = "ellipse"
    _m: float = field(init=False, repr=False)
    _perimeter: float = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise GeometryError("ellipse semi-axes must be positive and finite")
        m = 1.0 - (self.a / self.b) ** 2
        object.__setattr__(self, "_m", m)
        object.__setattr__(self, "_perimeter", 4.0 * self.b * float(ellipe(m)))

    @property
    def boundary_length(self):
        return self._perimeter

    @property
    def scale(self):
        return max(self.a, self.b)

    def _arclength(self, t):
        # speed = b sqrt(1 - m sin^2 t) with m = 1 - a^2/b^2
        return self.b * ellipeinc(t, self._m)

    def _speed(self, t):
        return np.hypot(self.a * np.sin(t), self.b * np.cos(t))

    def _angle(self, s):
        s = np.mod(np.asarray(s, dtype=float), self._perimeter)
        t = 2.0 * math.pi * s / self._perimeter
        for _ in range(30):
            dt = (self._arclength(t) - s) / self._speed(t)
            t = t - dt
            if np.all(np.abs(dt) < 1e-15):
                break
        return t

    def _eval(self, s):
        t = self._angle(s)
        c, sn = np.cos(t), np.sin(t)
        p = np.asarray(self.center) + np.stack([self.a * c, self.b * sn], axis=-1)
        v = np.stack([-self.a * sn, self.b * c], axis=-1)
        sp = np.hypot(v[..., 0], v[..., 1])
        tt = v / sp[..., None]
        return p, tt, _outward_from_tangent(tt), self.a * self.b / sp**3

    def contains(self, x, margin=0.0):
        r = np.asarray(x, dtype=float) - np.asarray(self.center)
        inside = (r[..., 0] / self.a) ** 2 + (r[..., 1] / self.b) ** 2 < 1.0
        if margin > 0.0:
            inside = inside & (self.distance_to_boundary(x) > margin)
        return inside

    def translated(self, v):
        return Ellipse(self.a, self.b, (self.center[0] + v[0], self.center[1] + v[1]))

    def scaled(self, lam):
        return Ellipse(lam * self.a, lam * self.b, (lam * self.center[0], lam * self.center[1]))

    def spec(self):
        return {"kind": "ellipse", "a": self.a, "b": self.b, "center": list(self.center)}


class SampledDomain(ConvexDomain):
    """Convex domain bounded by a periodic cubic spline through sample points.

    The spline is re-parametrised once by its own arclength, so ``s`` is an
    arclength parameter up to interpolation error.
    """

    kind = "sampled"

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 5:
            raise GeometryError("sampled domain needs at least 5 points of shape (n, 2)")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("sampled domain points must be finite")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        area2 = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        if area2 < 0:
            pts = pts[::-1]
        e = np.roll(pts, -1, axis=0) - pts
        cr = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        if np.any(cr < -1e-12 * np.max(np.abs(cr))):
            raise GeometryError("sampled boundary polygon is not convex")
        self._input = pts.copy()

        # pass 1: chord-length parametrisation
        u = np.concatenate([[0.0], np.cumsum(np.linalg.norm(e, axis=1))])
        closed = np.vstack([pts, pts[:1]])
        sp1 = CubicSpline(u, closed, bc_type="periodic")
        # arclength of pass-1 spline at each knot, by Gauss-Legendre per interval
        gx, gw = np.polynomial.legendre.leggauss(8)
        seg = np.empty(len(u) - 1)
        for i in range(len(u) - 1):
            a, b = u[i], u[i + 1]
            tq = 0.5 * (b - a) * gx + 0.5 * (a + b)
            seg[i] = 0.5 * (b - a) * np.sum(gw * np.linalg.norm(sp1(tq, 1), axis=1))
        s_knots = np.concatenate([[0.0], np.cumsum(seg)])
        self._spline = CubicSpline(s_knots, closed, bc_type="periodic")
        self._length = float(s_knots[-1])
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)

        dense = self.sample(4096)
        kap = self._eval(dense)[3]
        if np.min(kap) < -1e-9 * np.max(np.abs(kap)):
            raise GeometryError("spline interpolant of the sampled boundary is not convex")
        self._poly = self._spline(dense)

    @property
    def boundary_length(self):
        return self._length

    @property
    def scale(self):
        return float(np.max(np.ptp(self._input, axis=0)))

    def _eval(self, s):
        s = np.mod(np.asarray(s, dtype=float), self._length)
        p = self._spline(s)
        v = self._d1(s)
        acc = self._d2(s)
        sp = np.hypot(v[..., 0], v[..., 1])
        t = v / sp[..., None]
        kap = (v[..., 0] * acc[..., 1] - v[..., 1] * acc[..., 0]) / sp**3
        return p, t, _outward_from_tangent(t), kap

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        a = self._poly
        e = np.roll(a, -1, axis=0) - a
        cr = e[None, :, 0] * (flat[:, None, 1] - a[None, :, 1]) - e[None, :, 1] * (flat[:, None, 0] - a[None, :, 0])
        inside = np.all(cr > 0, axis=1)
        if margin > 0.0:
            inside = inside & (self.project(flat)[1] > margin)
        return inside.reshape(x.shape[:-1])

    def translated(self, v):
        return SampledDomain(self._input + np.asarray(v, dtype=float))

    def scaled(self, lam):
        return SampledDomain(self._input * lam)

    def spec(self):
        return {"kind": "sampled", "points": self._input.tolist()}


def boundary_frame(domain: ConvexDomain, s: float) -> BoundaryFrame:
    return domain.frame(s)


def project_to_boundary(domain: ConvexDomain, x) -> BoundaryFrame:
    """Nearest boundary point to ``x``; ``distance`` is set on the returned frame."""
    x = np.asarray(x, dtype=float)
    s, d = domain.project(x[None, :])
    f = domain.frame(float(s[0]))
    return BoundaryFrame(f.s, f.point, f.tangent, f.outward_normal, f.curvature, float(d[0]))


# -- angles ------------------------------------------------------------------


def _wrap_angle(a):
    """Map to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


def _angle_in(w, e_cos, e_sin):
    """Angle ``a`` with ``w = cos(a) e_cos + sin(a) e_sin`` for an orthonormal pair."""
    return _wrap_angle(math.atan2(float(np.dot(w, e_sin)), float(np.dot(w, e_cos))))


def _unit(v, what):
    n = float(np.hypot(v[0], v[1]))
    if n <= 1e-14:
        raise DegenerateConfigurationError(f"{what} is undefined: coincident points")
    return v / n


@dataclass(frozen=True)
class AngleData:
    """Angles of a configuration ``(x, y, z)`` with curve directions ``X``, ``Y``.

    ``alpha_*`` decompose ``(x - y)/|x - y|`` in the frame ``(-J X, X)``
    (resp. ``(-J Y, Y)``), ``beta_*`` decompose the rays from the bounce point
    ``z`` in the same frames, and ``theta_*`` decompose them in ``(N^S, T^S)``.
    All values lie in (-pi, pi].
    """

    alpha_x: float
    alpha_y: float
    beta_x: float
    beta_y: float
    theta_x: float
    theta_y: float

    def as_dict(self):
        return {k: getattr(self, k) for k in ("alpha_x", "alpha_y", "beta_x", "beta_y", "theta_x", "theta_y")}


def angles_at(domain: ConvexDomain | None, x, y, z: BoundaryFrame, X, Y) -> AngleData:
    x, y = np.asarray(x, float), np.asarray(y, float)
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    w = _unit(x - y, "alpha (x == y)")
    ux = _unit(x - z.point, "beta_x/theta_x (x == z)")
    uy = _unit(y - z.point, "beta_y/theta_y (y == z)")
    nX, nY = -rot90(X), -rot90(Y)
    return AngleData(
        alpha_x=_angle_in(w, nX, X),
        alpha_y=_angle_in(w, nY, Y),
        beta_x=_angle_in(ux, nX, X),
        beta_y=_angle_in(uy, nY, Y),
        theta_x=_angle_in(ux, z.outward_normal, z.tangent),
        theta_y=_angle_in(uy, z.outward_normal, z.tangent),
    )


def angle_reconstruction_residual(angles: AngleData, x, y, z: BoundaryFrame, X, Y) -> float:
    """Max deviation when the angle decompositions are rebuilt into unit vectors."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    nX, nY = -rot90(X), -rot90(Y)
    w = (x - y) / np.linalg.norm(x - y)
    ux = (x - z.point) / np.linalg.norm(x - z.point)
    uy = (y - z.point) / np.linalg.norm(y - z.point)
    a = angles
    recon = [
        (w, math.cos(a.alpha_x) * nX + math.sin(a.alpha_x) * X),
        (w, math.cos(a.alpha_y) * nY + math.sin(a.alpha_y) * Y),
        (ux, math.cos(a.beta_x) * nX + math.sin(a.beta_x) * X),
        (uy, math.cos(a.beta_y) * nY + math.sin(a.beta_y) * Y),
        (ux, math.cos(a.theta_x) * z.outward_normal + math.sin(a.theta_x) * z.tangent),
        (uy, math.cos(a.theta_y) * z.outward_normal + math.sin(a.theta_y) * z.tangent),
    ]
    return max(float(np.max(np.abs(u - v))) for u, v in recon)


def domain_from_spec(spec: dict) -> ConvexDomain:
    kind = spec.get("kind")
    center = tuple(spec.get("center", (0.0, 0.0)))
    if kind == "half_plane":
        return HalfPlane(center)
    if kind == "disk":
        return Disk(float(spec.get("radius", 1.0)), center)
    if kind == "ellipse":
        return Ellipse(float(spec["a"]), float(spec["b"]), center)
    if kind == "sampled":
        return SampledDomain(spec["points"])
    raise GeometryError(f"unknown domain kind {kind!r}")
