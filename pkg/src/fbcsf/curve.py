"""Polyline curves with both endpoints on the boundary of a convex domain.

Vertices ``v_0 .. v_n``; ``v_0`` and ``v_n`` lie on the boundary. The unit
tangent ``T`` points along increasing index and the normal is ``N = -J T``
(``orientation = +1``) so that ``T = J N``. Flipping ``orientation`` flips
``N`` and therefore the sign of the curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .domain import ConvexDomain, Disk, GeometryError, HalfPlane, rot90

__all__ = [
    "MeshError",
    "DiscreteCurve",
    "DoubledCurve",
    "arclength",
    "chordlength",
    "reflected_arclength",
    "discrete_curvature",
    "total_curvature",
    "CurvatureSummary",
    "min_segment_separation",
    "is_embedded",
    "remesh",
    "straight_chord",
    "semicircle",
    "boundary_arc",
    "perturbed_chord",
    "curve_from_spec",
]


class MeshError(GeometryError):
    """Degenerate discretisation (collapsed edges, too few vertices)."""


def _turning(e0, e1):
    """Signed angle from direction ``e0`` to ``e1`` (counterclockwise positive)."""
    cr = e0[..., 0] * e1[..., 1] - e0[..., 1] * e1[..., 0]
    dt = e0[..., 0] * e1[..., 0] + e0[..., 1] * e1[..., 1]
    return np.arctan2(cr, dt)


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    vertices: np.ndarray
    domain: ConvexDomain
    endpoint_params: tuple
    orientation: int = 1

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise MeshError("curve needs at least two vertices of shape (n, 2)")
        if not np.all(np.isfinite(v)):
            raise GeometryError("curve vertices must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")

    # -- construction --------------------------------------------------------
    @classmethod
    def from_vertices(cls, vertices, domain: ConvexDomain, snap: bool = False, tol: float = 1e-8, orientation: int = 1):
        """Build a curve, checking that the end vertices lie on the boundary.

        With ``snap=True`` each end vertex is replaced by the boundary foot of
        its neighbour so the end segments meet the boundary orthogonally.
        """
        v = np.array(vertices, dtype=float)
        if v.ndim != 2 or len(v) < 2:
            raise GeometryError("curve needs a non-empty (n, 2) vertex list")
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        length = float(np.sum(seg))
        if not length > 0:
            raise MeshError("curve has zero length")
        s_ends, dist = domain.project(v[[0, -1]])
        if np.any(dist > tol * length):
            raise GeometryError(
                f"endpoint off the boundary by {float(np.max(dist)):.3e} (> {tol:g} * L)"
            )
        s_l, s_r = float(s_ends[0]), float(s_ends[1])
        if snap:
            s_l = domain.foot_parameter(v[1], s_l)
            s_r = domain.foot_parameter(v[-2], s_r)
        v[0] = domain.frame(s_l).point
        v[-1] = domain.frame(s_r).point
        return cls(v, domain, (s_l, s_r), orientation)

    def with_vertices(self, vertices, endpoint_params) -> "DiscreteCurve":
        return DiscreteCurve(vertices, self.domain, tuple(endpoint_params), self.orientation)

    def flipped_normal(self) -> "DiscreteCurve":
        return DiscreteCurve(self.vertices, self.domain, self.endpoint_params, -self.orientation)

    def reversed(self) -> "DiscreteCurve":
        s_l, s_r = self.endpoint_params
        return DiscreteCurve(self.vertices[::-1].copy(), self.domain, (s_r, s_l), self.orientation)

    # -- tables ----------------------------------------------------------------
    @property
    def n_edges(self) -> int:
        return len(self.vertices) - 1

    @cached_property
    def edges(self):
        return np.diff(self.vertices, axis=0)

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return np.hypot(e[:, 0], e[:, 1])

    @cached_property
    def cumulative_arclength(self):
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)])

    @property
    def length(self) -> float:
        return float(self.cumulative_arclength[-1])

    @property
    def h_max(self) -> float:
        return float(np.max(self.edge_lengths))

    @property
    def h_min(self) -> float:
        return float(np.min(self.edge_lengths))

    @cached_property
    def endpoint_frames(self):
        return self.domain.frame(self.endpoint_params[0]), self.domain.frame(self.endpoint_params[1])

    @cached_property
    def _curvature_data(self):
        return _curvature(self)

    @property
    def curvature(self):
        return self._curvature_data[0]

    @property
    def dual_lengths(self):
        """Quadrature weights for curvature integrals (sum to ``L``)."""
        return self._curvature_data[1]

    @cached_property
    def unit_tangents(self):
        """Vertex tangents along increasing index.

        Edge bisectors inside; next to an end, the following edge direction
        turned back by half its curvature-weighted length; the boundary
        normal direction at the ends.
        """
        u = self.edges / self.edge_lengths[:, None]
        h = self.edge_lengths
        t = np.empty_like(self.vertices)
        b = u[:-1] + u[1:]
        t[1:-1] = b / np.linalg.norm(b, axis=1)[:, None]
        if len(h) >= 3:
            k = self.curvature * self.orientation
            t[1] = _rotate(u[1], -0.5 * k[1] * h[1])
            t[-2] = _rotate(u[-2], 0.5 * k[-2] * h[-2])
        f0, f1 = self.endpoint_frames
        t[0] = -f0.outward_normal
        t[-1] = f1.outward_normal
        return t

    @property
    def normals(self):
        return -rot90(self.unit_tangents) * self.orientation

    def orthogonality_residuals(self):
        """``|<T, T^S>|`` of the end segments at both endpoints."""
        u = self.edges / self.edge_lengths[:, None]
        f0, f1 = self.endpoint_frames
        return abs(float(u[0] @ f0.tangent)), abs(float(u[-1] @ f1.tangent))

    def boundary_gaps(self):
        """Distance of the end vertices from the boundary."""
        return self.domain.project(self.vertices[[0, -1]])[1]

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "endpoint_params": list(self.endpoint_params),
            "orientation": self.orientation,
            "domain": self.domain.spec(),
        }


def _curvature(curve: DiscreteCurve):
    v = curve.vertices
    n = len(v) - 1
    if n + 1 < 4:
        raise MeshError("discrete curvature needs at least 4 vertices")
    h = curve.edge_lengths
    if np.any(h < 1e-14 * curve.length):
        raise MeshError("degenerate edge (length below 1e-14 L)")
    e = curve.edges
    phi = np.zeros(n + 1)
    phi[1:-1] = _turning(e[:-1], e[1:])
    f0, f1 = curve.endpoint_frames
    # turning of the tangent between the boundary condition direction and the end edges
    phi_l = float(_turning(-f0.outward_normal, e[0]))
    phi_r = float(_turning(e[-1], f1.outward_normal))
    w = np.zeros(n + 1)
    w[1:-1] = 0.5 * (h[:-1] + h[1:])
    w[1] = h[0] + 0.5 * h[1]
    w[-2] = h[-1] + 0.5 * h[-2]
    kap = np.zeros(n + 1)
    kap[1:-1] = phi[1:-1]
    kap[1] += phi_l
    kap[-2] += phi_r
    if n == 2:
        # a single interior vertex carries both end corrections
        w[1] = float(np.sum(h))
    kap[1:-1] /= w[1:-1]
    c = curve.cumulative_arclength
    kap[0] = _quad_extrapolate(c[1:4], kap[1:4], c[0])[0]
    kap[-1] = _quad_extrapolate(c[-4:-1], kap[-4:-1], c[-1])[0]
    return kap * curve.orientation, w


def _rotate(u, a):
    c, s = math.cos(a), math.sin(a)
    return np.array([c * u[0] - s * u[1], s * u[0] + c * u[1]])


def _quad_extrapolate(s, k, s0):
    """Value and slope at ``s0`` of the parabola through three samples."""
    coef = np.polyfit(s - s0, k, 2)
    return coef[2], coef[1]


def endpoint_curvature_slopes(curve: DiscreteCurve):
    """``d kappa / ds`` at both endpoints from the extrapolating parabolas."""
    c = curve.cumulative_arclength
    kap = curve.curvature
    return (
        _quad_extrapolate(c[1:4], kap[1:4], c[0])[1],
        _quad_extrapolate(c[-4:-1], kap[-4:-1], c[-1])[1],
    )


def arclength(curve: DiscreteCurve, i: int, j: int) -> float:
    c = curve.cumulative_arclength
    return abs(float(c[i] - c[j]))


def chordlength(curve: DiscreteCurve, i: int, j: int) -> float:
    d = curve.vertices[i] - curve.vertices[j]
    return float(math.hypot(d[0], d[1]))


def reflected_arclength(curve: DiscreteCurve, i: int, j: int) -> float:
    c = curve.cumulative_arclength
    via_left = float(c[i] + c[j])
    return min(via_left, 2.0 * curve.length - via_left)


def discrete_curvature(curve: DiscreteCurve):
    return curve.curvature


@dataclass(frozen=True)
class CurvatureSummary:
    total: float
    vertex_count: int
    inflection_count: int
    l2: float
    max_abs: float


def _sign_changes(values, floor):
    sig = np.sign(values[np.abs(values) > floor])
    return int(np.count_nonzero(sig[1:] != sig[:-1]))


def total_curvature(curve: DiscreteCurve) -> CurvatureSummary:
    """Total absolute curvature plus inflection and vertex counts.

    Sign changes are counted over interior vertices, ignoring values below a
    noise floor relative to the largest curvature.
    """
    kap = curve.curvature
    w = curve.dual_lengths
    inner = kap[1:-1]
    kmax = float(np.max(np.abs(inner)))
    floor = max(1e-8 * kmax, 1e-10 / curve.length)
    ks = np.diff(inner) / np.diff(curve.cumulative_arclength[1:-1])
    ks_floor = max(1e-6 * float(np.max(np.abs(ks))), 1e-6 * kmax / curve.length, 1e-10 / curve.length**2) if len(ks) else 0.0
    return CurvatureSummary(
        total=float(np.sum(np.abs(kap) * w)),
        vertex_count=_sign_changes(ks, ks_floor),
        inflection_count=_sign_changes(inner, floor),
        l2=float(np.sum(kap**2 * w)),
        max_abs=float(np.max(np.abs(kap))),
    )


# -- embeddedness ---------------------------------------------------------------


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    t = np.clip(np.sum((p - a) * ab, axis=-1) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    q = a + t[..., None] * ab
    return np.linalg.norm(p - q, axis=-1)


def _segments_distance(a0, a1, b0, b1):
    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    o1, o2 = orient(a0, a1, b0), orient(a0, a1, b1)
    o3, o4 = orient(b0, b1, a0), orient(b0, b1, a1)
    cross = (o1 * o2 < 0) & (o3 * o4 < 0)
    d = np.minimum.reduce([
        _point_segment_distance(a0, b0, b1),
        _point_segment_distance(a1, b0, b1),
        _point_segment_distance(b0, a0, a1),
        _point_segment_distance(b1, a0, a1),
    ])
    return np.where(cross, 0.0, d)


def min_segment_separation(vertices) -> float:
    """Smallest distance between non-adjacent edges of a polyline.

    Candidate pairs come from a k-d tree on edge midpoints; pairs farther apart
    than the search radius are bounded below by ``radius - h_max``.
    """
    v = np.asarray(vertices, dtype=float)
    m = len(v) - 1
    if m < 3:
        return math.inf
    a, b = v[:-1], v[1:]
    h = np.linalg.norm(b - a, axis=1)
    hmax = float(np.max(h))
    radius = 3.0 * hmax
    mid = 0.5 * (a + b)
    pairs = cKDTree(mid).query_pairs(radius, output_type="ndarray")
    bound = radius - hmax
    if len(pairs) == 0:
        return bound
    i, j = pairs[:, 0], pairs[:, 1]
    keep = np.abs(i - j) >= 2
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return bound
    d = _segments_distance(a[i], b[i], a[j], b[j])
    return float(min(bound, np.min(d)))


def is_embedded(curve: DiscreteCurve) -> bool:
    if min_segment_separation(curve.vertices) <= 0.0:
        return False
    return bool(np.all(curve.domain.contains(curve.vertices[1:-1])))


# -- formal double ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DoubledCurve:
    """Two copies of a curve glued at the endpoints.

    Points are ``(i, sign)`` with ``sign`` in ``{+1, -1}``; ``(0, +)`` and
    ``(0, -)`` are identified, as are ``(n, +)`` and ``(n, -)``.
    """

    base: DiscreteCurve

    @property
    def doubled_length(self) -> float:
        return 2.0 * self.base.length

    def ell(self, i, si, j, sj) -> float:
        if si == sj or self.is_endpoint(i) or self.is_endpoint(j):
            if si != sj:
                return reflected_arclength(self.base, i, j)
            return arclength(self.base, i, j)
        return reflected_arclength(self.base, i, j)

    def d(self, i, si, j, sj) -> float:
        if si == sj or self.is_endpoint(i) or self.is_endpoint(j):
            return chordlength(self.base, i, j)
        from .billiard import reflected_distance

        return reflected_distance(self.base.domain, self.base.vertices[i], self.base.vertices[j]).distance

    def is_endpoint(self, i) -> bool:
        return i == 0 or i == self.base.n_edges


# -- remeshing --------------------------------------------------------------------


def remesh(curve: DiscreteCurve, n_edges: int | None = None) -> DiscreteCurve:
    """Equidistribute vertices in arclength using a cubic interpolant.

    Falls back to linear resampling when the cubic result would lengthen the
    polyline, so remeshing never increases ``L``.
    """
    n_edges = curve.n_edges if n_edges is None else int(n_edges)
    if n_edges < 3:
        raise MeshError("remesh needs at least 3 edges")
    c = curve.cumulative_arclength
    u = np.linspace(0.0, c[-1], n_edges + 1)
    spline = CubicSpline(c, curve.vertices, bc_type="not-a-knot")
    new = spline(u)
    s_l, s_r = curve.endpoint_params
    dom = curve.domain
    new[0], new[-1] = curve.vertices[0], curve.vertices[-1]
    try:
        out = _snap(curve, new, s_l, s_r)
    except GeometryError:
        out = None
    if out is None or out.length > curve.length or not np.all(dom.contains(out.vertices[1:-1])):
        lin = np.column_stack([np.interp(u, c, curve.vertices[:, 0]), np.interp(u, c, curve.vertices[:, 1])])
        out = _snap(curve, lin, s_l, s_r)
    return out


def _snap(curve, verts, s_l, s_r):
    dom = curve.domain
    s_l = dom.foot_parameter(verts[1], s_l)
    s_r = dom.foot_parameter(verts[-2], s_r)
    verts = verts.copy()
    verts[0] = dom.frame(s_l).point
    verts[-1] = dom.frame(s_r).point
    return curve.with_vertices(verts, (s_l, s_r))


# -- initial shapes -------------------------------------------------------------


def straight_chord(domain: ConvexDomain, s0: float, s1: float, n_edges: int) -> DiscreteCurve:
    p0, p1 = domain.frame(s0).point, domain.frame(s1).point
    u = np.linspace(0.0, 1.0, n_edges + 1)[:, None]
    v = (1 - u) * p0 + u * p1
    v[0], v[-1] = p0, p1
    return DiscreteCurve(v, domain, (float(domain.wrap(s0)), float(domain.wrap(s1))))


def perturbed_chord(domain, s0, s1, n_edges, amplitude, bumps: int = 1, parity: str = "even") -> DiscreteCurve:
    """Chord plus a normal bump of height ``amplitude``.

    ``parity="even"`` uses ``sin^2(bumps * pi * u)``, symmetric about the
    midpoint. ``parity="odd"`` uses ``sin(2 pi u) sin^2(pi u)`` scaled to unit
    maximum, antisymmetric about the midpoint. Both profiles and their slopes
    vanish at the ends, so an orthogonal chord stays orthogonal.
    """
    p0, p1 = domain.frame(s0).point, domain.frame(s1).point
    u = np.linspace(0.0, 1.0, n_edges + 1)
    d = p1 - p0
    nrm = -rot90(d / np.linalg.norm(d))
    if parity == "even":
        bump = np.sin(bumps * math.pi * u) ** 2
    elif parity == "odd":
        bump = np.sin(2.0 * math.pi * u) * np.sin(math.pi * u) ** 2 / _ODD_BUMP_MAX
    else:
        raise GeometryError(f"unknown bump parity {parity!r}")
    v = p0 + u[:, None] * d + (amplitude * bump)[:, None] * nrm
    v[0], v[-1] = p0, p1
    return DiscreteCurve(v, domain, (float(domain.wrap(s0)), float(domain.wrap(s1))))


# max of sin(2 pi u) sin^2(pi u) on [0, 1], attained where cos(pi u) = 1/2
_ODD_BUMP_MAX = 3.0 * math.sqrt(3.0) / 8.0


def semicircle(domain: HalfPlane, radius: float, n_edges: int, x0: float = 0.0) -> DiscreteCurve:
    """Upper half of the circle of given radius centred on the boundary line."""
    cx, cy = domain.center
    a = np.linspace(0.0, math.pi, n_edges + 1)
    v = np.column_stack([cx + x0 + radius * np.cos(a), cy + radius * np.sin(a)])
    v[0] = (cx + x0 + radius, cy)
    v[-1] = (cx + x0 - radius, cy)
    return DiscreteCurve(v, domain, (x0 + radius, x0 - radius))


def boundary_arc(domain: ConvexDomain, s_center: float, radius: float, n_edges: int) -> DiscreteCurve:
    """Small arc cutting off a piece of the boundary around ``s_center``.

    Disk: arc of the circle of radius ``radius`` meeting the boundary
    orthogonally. Half-plane: a semicircle. Other domains: arc of the circle
    of radius ``radius`` centred at the boundary point, clipped to the domain.
    """
    if isinstance(domain, HalfPlane):
        return semicircle(domain, radius, n_edges, x0=s_center)
    f = domain.frame(s_center)
    if isinstance(domain, Disk):
        big = domain.radius
        dist = math.hypot(big, radius)
        centre = np.asarray(domain.center) + f.outward_normal * dist
        half = math.pi / 2 - math.atan2(radius, big)
        base = math.atan2(-f.outward_normal[1], -f.outward_normal[0])
        ang = np.linspace(base - half, base + half, n_edges + 1)
        v = centre + radius * np.column_stack([np.cos(ang), np.sin(ang)])
        return DiscreteCurve.from_vertices(v, domain, tol=1e-9)
    centre = f.point
    base = math.atan2(-f.outward_normal[1], -f.outward_normal[0])

    def inside(psi):
        return bool(domain.contains(centre + radius * np.array([math.cos(psi), math.sin(psi)])))

    def edge(sign):
        lo, hi = 0.0, math.pi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if inside(base + sign * mid):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    a0, a1 = base - edge(-1.0), base + edge(1.0)
    ang = np.linspace(a0, a1, n_edges + 1)
    v = centre + radius * np.column_stack([np.cos(ang), np.sin(ang)])
    s_ends = domain.project(v[[0, -1]])[0]
    v[0] = domain.frame(float(s_ends[0])).point
    v[-1] = domain.frame(float(s_ends[1])).point
    return DiscreteCurve(v, domain, (float(s_ends[0]), float(s_ends[1])))


def curve_from_spec(spec: dict, domain: ConvexDomain) -> DiscreteCurve:
    """Initial curve from a JSON-like spec (see the CLI config reference)."""
    kind = spec.get("type")
    n = int(spec.get("n_edges", 200))
    if kind == "vertices":
        verts = spec.get("vertices") or []
        if len(verts) < 2:
            raise GeometryError("explicit curve needs at least two vertices")
        return DiscreteCurve.from_vertices(verts, domain, snap=bool(spec.get("snap", False)))
    if kind == "chord":
        return straight_chord(domain, float(spec["s0"]), float(spec["s1"]), n)
    if kind == "perturbed_chord":
        return perturbed_chord(domain, float(spec["s0"]), float(spec["s1"]), n,
                               float(spec.get("amplitude", 0.05)), int(spec.get("bumps", 1)),
                               str(spec.get("parity", "even")))
    if kind == "boundary_arc":
        if "angular_extent" in spec:
            if not isinstance(domain, Disk):
                raise GeometryError("angular_extent is only defined for disk domains")
            radius = domain.radius * math.tan(0.5 * float(spec["angular_extent"]))
        else:
            radius = float(spec["radius"])
        return boundary_arc(domain, float(spec.get("s", 0.0)), radius, n)
    if kind == "semicircle":
        if not isinstance(domain, HalfPlane):
            raise GeometryError("semicircle initial curves need a half_plane domain")
        return semicircle(domain, float(spec.get("radius", 1.0)), n, float(spec.get("x0", 0.0)))
    raise GeometryError(f"unknown curve type {kind!r}")
