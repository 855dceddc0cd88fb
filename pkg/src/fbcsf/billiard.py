"""Reflected distance: shortest single-bounce path between two interior points.

``d~(x, y) = min_{z in boundary} |x - z| + |y - z|``. The minimising bounce
point satisfies the reflection law ``sin(theta_x) + sin(theta_y) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    BoundaryFrame,
    ConvexDomain,
    GeometryError,
    HalfPlane,
    _newton_minimize,
    rot90,
)

__all__ = [
    "ReflectedDistanceResult",
    "DistanceVariations",
    "reflected_distance",
    "reflected_distance_batch",
    "distance_first_second_variations",
]

N_SCAN = 256
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class ReflectedDistanceResult:
    distance: float
    bounce: BoundaryFrame
    theta: float
    d_x: float
    d_y: float
    theta_x: float
    theta_y: float
    multiple: bool = False

    @property
    def snell_residual(self) -> float:
        return abs(math.sin(self.theta_x) + math.sin(self.theta_y))


def _canonical(x, y):
    # lexicographic order so that d~(x, y) and d~(y, x) share one evaluation path
    swap = (x[:, 0] > y[:, 0]) | ((x[:, 0] == y[:, 0]) & (x[:, 1] > y[:, 1]))
    a = np.where(swap[:, None], y, x)
    b = np.where(swap[:, None], x, y)
    return a, b, swap


def _check_interior(domain: ConvexDomain, pts):
    tol = 1e-12 * domain.scale
    ok = domain.contains(pts)
    if not np.all(ok):
        raise GeometryError("reflected distance requires points strictly inside the domain")
    if not isinstance(domain, HalfPlane):
        return
    if np.any(pts[:, 1] - domain.center[1] <= tol):
        raise GeometryError("reflected distance requires points strictly inside the domain")


def reflected_distance_batch(domain: ConvexDomain, x, y, n_scan: int = N_SCAN, check: bool = True, chunk: int = 2048):
    """Vectorised reflected distance for rows of ``x`` and ``y`` (shape (m, 2)).

    Returns a dict of arrays: ``distance``, ``s`` (bounce parameter), ``d_x``,
    ``d_y``, ``snell`` (``|sin theta_x + sin theta_y|``) and ``multiple``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if check:
        _check_interior(domain, np.vstack([x, y]))
    a, b, swap = _canonical(x, y)
    m = len(a)
    out_s = np.empty(m)
    out_mult = np.zeros(m, dtype=bool)

    if isinstance(domain, HalfPlane):
        cy = domain.center[1]
        ha, hb = a[:, 1] - cy, b[:, 1] - cy
        out_s = a[:, 0] + (b[:, 0] - a[:, 0]) * ha / (ha + hb) - domain.center[0]
    else:
        grid = domain.sample(n_scan)
        h = domain.boundary_length / n_scan
        pts = domain.points(grid)
        tol = 1e-14 * max(1.0, domain.boundary_length)
        for lo in range(0, m, chunk):
            sl = slice(lo, min(m, lo + chunk))
            ca, cb = a[sl], b[sl]
            f = np.linalg.norm(ca[:, None, :] - pts[None], axis=-1) + np.linalg.norm(cb[:, None, :] - pts[None], axis=-1)
            is_min = (f <= np.roll(f, 1, axis=1)) & (f < np.roll(f, -1, axis=1))
            masked = np.where(is_min, f, np.inf)
            order = np.argsort(masked, axis=1)[:, :2]
            rows = np.arange(len(ca))
            has2 = np.isfinite(masked[rows, order[:, 1]])

            def grad_hess(s, ca=ca, cb=cb):
                p, t, n, kap = domain._eval(s)
                g = np.zeros_like(s)
                hh = np.zeros_like(s)
                for q in (ca, cb):
                    r = q - p
                    d = np.hypot(r[:, 0], r[:, 1])
                    u = r / d[:, None]
                    ut = np.sum(u * t, axis=1)
                    g -= ut
                    hh += (1.0 - ut**2) / d + kap * np.sum(u * n, axis=1)
                return g, hh

            cands = []
            for j in range(2):
                s0 = grid[order[:, j]]
                s = _newton_minimize(grad_hess, s0, s0 - h, s0 + h, tol)
                p = domain.points(s)
                val = np.linalg.norm(ca - p, axis=1) + np.linalg.norm(cb - p, axis=1)
                cands.append((s, val))
            (s1, v1), (s2, v2) = cands
            v2 = np.where(has2, v2, np.inf)
            pick2 = v2 < v1
            best_s = np.where(pick2, s2, s1)
            best_v = np.minimum(v1, v2)
            other_v = np.maximum(v1, v2)
            gap = np.abs(np.mod(s1 - s2 + 0.5 * domain.boundary_length, domain.boundary_length) - 0.5 * domain.boundary_length)
            out_mult[sl] = has2 & (other_v - best_v <= TIE_RTOL * best_v) & (gap > 2.0 * h)
            out_s[sl] = domain.wrap(best_s)

    p, t, n, _ = domain._eval(out_s)
    ra, rb = a - p, b - p
    da, db = np.hypot(ra[:, 0], ra[:, 1]), np.hypot(rb[:, 0], rb[:, 1])
    sin_a = np.sum(ra * t, axis=1) / da
    sin_b = np.sum(rb * t, axis=1) / db
    d_x = np.where(swap, db, da)
    d_y = np.where(swap, da, db)
    return {
        "distance": da + db,
        "s": out_s,
        "d_x": d_x,
        "d_y": d_y,
        "snell": np.abs(sin_a + sin_b),
        "multiple": out_mult,
    }


def reflected_distance(domain: ConvexDomain, x, y) -> ReflectedDistanceResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = reflected_distance_batch(domain, x[None, :], y[None, :])
    s = float(r["s"][0])
    z = domain.frame(s)
    ux = (x - z.point) / np.linalg.norm(x - z.point)
    uy = (y - z.point) / np.linalg.norm(y - z.point)
    th_x = math.atan2(float(ux @ z.tangent), float(ux @ z.outward_normal))
    th_y = math.atan2(float(uy @ z.tangent), float(uy @ z.outward_normal))
    return ReflectedDistanceResult(
        distance=float(r["distance"][0]),
        bounce=z,
        theta=th_x,
        d_x=float(r["d_x"][0]),
        d_y=float(r["d_y"][0]),
        theta_x=th_x,
        theta_y=th_y,
        multiple=bool(r["multiple"][0]),
    )


@dataclass(frozen=True)
class DistanceVariations:
    """First and second directional derivatives of ``d = |x - y|``."""

    dx: float
    dy: float
    dxx: float
    dyy: float
    dxy: float
    alpha_x: float
    alpha_y: float


def distance_first_second_variations(x, y, X, Y) -> DistanceVariations:
    """Derivatives of ``|x - y|`` along unit ``X`` (at ``x``) and ``Y`` (at ``y``).

    Expressed through the angles ``alpha_x``, ``alpha_y`` of the unit chord
    ``(x - y)/d`` in the frames ``(-J X, X)`` and ``(-J Y, Y)``.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    d = float(np.linalg.norm(x - y))
    if d == 0.0:
        raise GeometryError("distance variations are undefined on the diagonal x == y")
    w = (x - y) / d
    ax = math.atan2(float(w @ X), float(w @ -rot90(X)))
    ay = math.atan2(float(w @ Y), float(w @ -rot90(Y)))
    return DistanceVariations(
        dx=math.sin(ax),
        dy=-math.sin(ay),
        dxx=math.cos(ax) ** 2 / d,
        dyy=math.cos(ay) ** 2 / d,
        dxy=-math.cos(ax) * math.cos(ay) / d,
        alpha_x=ax,
        alpha_y=ay,
    )
