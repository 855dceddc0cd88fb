from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbcsf.domain import (
    DegenerateConfigurationError,
    Disk,
    Ellipse,
    GeometryError,
    HalfPlane,
    SampledDomain,
    angle_reconstruction_residual,
    angles_at,
    boundary_frame,
    domain_from_spec,
    project_to_boundary,
    rot90,
)

from . import oracles


def _ellipse_samples(a, b, n=400):
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    return np.column_stack([a * np.cos(t), b * np.sin(t)])


DOMAINS = [
    HalfPlane(),
    Disk(1.0),
    Disk(2.5, (1.0, -0.5)),
    Ellipse(2.0, 1.0),
    Ellipse(3.0, 0.5, (0.2, 0.1)),
    SampledDomain(_ellipse_samples(2.0, 1.0)),
]


@pytest.mark.parametrize("dom", DOMAINS, ids=lambda d: d.kind)
def test_frames_are_orthonormal_and_rotated(dom):
    ss = np.linspace(-3.0, 3.0, 41) if not dom.bounded else np.linspace(0, dom.boundary_length, 41)
    tol = 1e-8 if isinstance(dom, SampledDomain) else 1e-12
    for s in ss:
        f = boundary_frame(dom, s)
        assert abs(np.linalg.norm(f.tangent) - 1) < 1e-12
        assert abs(np.linalg.norm(f.outward_normal) - 1) < 1e-12
        assert abs(f.tangent @ f.outward_normal) < 1e-12
        assert np.allclose(f.tangent, rot90(f.outward_normal), atol=tol)
        assert f.curvature >= -tol


def test_disk_frame_at_zero():
    f = boundary_frame(Disk(1.0), 0.0)
    assert np.allclose(f.point, [1, 0], atol=1e-15)
    assert np.allclose(f.outward_normal, [1, 0], atol=1e-15)
    assert np.allclose(f.tangent, [0, 1], atol=1e-15)
    assert f.curvature == pytest.approx(1.0)


def test_half_plane_frame():
    f = boundary_frame(HalfPlane(), 2.0)
    assert np.allclose(f.point, [2, 0])
    assert np.allclose(f.outward_normal, [0, -1])
    assert f.curvature == 0.0


def test_ellipse_vertex_curvature_matches_closed_form_and_finite_differences():
    dom = Ellipse(2.0, 1.0)
    f = boundary_frame(dom, 0.0)
    assert np.allclose(f.point, [2, 0], atol=1e-12)
    assert f.curvature == pytest.approx(oracles.ellipse_vertex_curvature(2.0, 1.0), rel=1e-10)
    # turning of the sampled normal over a short arc
    h = 1e-4
    a0 = dom.normal_angle(-h)[0]
    a1 = dom.normal_angle(h)[0]
    assert (a1 - a0) / (2 * h) == pytest.approx(2.0, rel=1e-6)


def test_ellipse_arclength_parameter_matches_quadrature():
    dom = Ellipse(2.0, 1.0)
    assert dom.boundary_length == pytest.approx(4 * oracles.ellipse_arclength(2.0, 1.0, math.pi / 2), rel=1e-10)
    s_quarter = oracles.ellipse_arclength(2.0, 1.0, math.pi / 2)
    assert np.allclose(dom.frame(s_quarter).point, [0, 1], atol=1e-9)


def test_sampled_domain_tracks_analytic_ellipse():
    sd = SampledDomain(_ellipse_samples(2.0, 1.0, 800))
    el = Ellipse(2.0, 1.0)
    assert sd.boundary_length == pytest.approx(el.boundary_length, rel=1e-5)
    x = np.array([1.2, 0.3])
    assert sd.distance_to_boundary(x[None])[0] == pytest.approx(el.distance_to_boundary(x[None])[0], abs=1e-5)


def test_sampled_domain_rejects_nonconvex():
    pts = _ellipse_samples(2.0, 1.0, 60)
    pts[10] *= 0.5
    with pytest.raises(GeometryError):
        SampledDomain(pts)


@pytest.mark.parametrize("s", [math.nan, math.inf])
def test_non_finite_parameter_is_rejected(s):
    with pytest.raises(GeometryError):
        boundary_frame(Disk(), s)


def test_disk_parameter_wraps():
    d = Disk(1.0)
    assert np.allclose(boundary_frame(d, 2 * math.pi + 0.3).point, boundary_frame(d, 0.3).point)


@pytest.mark.parametrize(
    "dom, x, point, dist",
    [
        (Disk(1.0), (0.5, 0.0), (1.0, 0.0), 0.5),
        (HalfPlane(), (3.0, 2.0), (3.0, 0.0), 2.0),
    ],
)
def test_projection_examples(dom, x, point, dist):
    f = project_to_boundary(dom, x)
    assert np.allclose(f.point, point, atol=1e-12)
    assert f.distance == pytest.approx(dist, abs=1e-12)


def test_ellipse_projection_matches_dense_scan():
    dom = Ellipse(2.0, 1.0)
    f = project_to_boundary(dom, (1.9, 0.3))
    p_ref, d_ref = oracles.nearest_point_scan(2.0, 1.0, (1.9, 0.3))
    # compare in arclength: the oracle works in the angle parameter
    t_ref = math.atan2(p_ref[1] / 1.0, p_ref[0] / 2.0)
    s_ref = oracles.ellipse_arclength(2.0, 1.0, t_ref) % dom.boundary_length
    assert abs(f.s - s_ref) < 1e-6
    assert f.distance == pytest.approx(d_ref, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.05, 0.95), ang=st.floats(0, 2 * math.pi), which=st.sampled_from([0, 1, 2]))
def test_projection_is_idempotent(r, ang, which):
    dom = [Disk(1.3), Ellipse(2.0, 1.0), Ellipse(3.0, 0.6, (0.5, 0.5))][which]
    c = np.asarray(getattr(dom, "center", (0, 0)), float)
    scale = 1.3 if which == 0 else (dom.a, dom.b)
    x = c + r * np.array([math.cos(ang), math.sin(ang)]) * scale
    f = project_to_boundary(dom, x)
    g = project_to_boundary(dom, f.point)
    L = dom.boundary_length
    gap = abs((g.s - f.s + L / 2) % L - L / 2)
    assert gap < 1e-10
    assert g.distance < 1e-10
    # the residual x - z lies along the normal
    r_vec = x - f.point
    assert abs(r_vec @ f.tangent) < 1e-9 * max(1.0, np.linalg.norm(r_vec))


@pytest.mark.parametrize(
    "spec, cls",
    [
        ({"kind": "disk", "radius": 1.0}, Disk),
        ({"kind": "ellipse", "a": 2.0, "b": 1.0}, Ellipse),
        ({"kind": "half_plane"}, HalfPlane),
        ({"kind": "sampled", "points": _ellipse_samples(2, 1, 50).tolist()}, SampledDomain),
    ],
)
def test_domain_from_spec(spec, cls):
    dom = domain_from_spec(spec)
    assert isinstance(dom, cls)
    assert domain_from_spec(dom.spec()).spec() == dom.spec()


def test_domain_from_spec_unknown_kind():
    with pytest.raises(GeometryError):
        domain_from_spec({"kind": "annulus"})


def test_half_plane_is_only_unbounded_kind():
    assert not HalfPlane().bounded
    assert math.isinf(HalfPlane().boundary_length)
    assert all(d.bounded for d in DOMAINS[1:])


# -- angles ------------------------------------------------------------------


def test_theta_antiparallel_to_outward_normal():
    z = boundary_frame(HalfPlane(), 0.0)
    a = angles_at(HalfPlane(), (0, 1), (1, 2), z, (1, 0), (1, 0))
    assert abs(abs(a.theta_x) - math.pi) < 1e-15


def test_alpha_from_direct_solve():
    # chord direction (1,1)/sqrt2 in the frame (-JX, X) = ((0,-1), (1,0)):
    # sin(alpha) = 1/sqrt2, cos(alpha) = -1/sqrt2
    z = boundary_frame(Disk(5.0), 0.0)
    a = angles_at(None, (1, 1), (0, 0), z, (1, 0), (1, 0))
    assert a.alpha_x == pytest.approx(3 * math.pi / 4, abs=1e-15)
    assert angle_reconstruction_residual(a, (1, 1), (0, 0), z, (1, 0), (1, 0)) < 1e-15


@settings(max_examples=80, deadline=None)
@given(
    pts=st.lists(st.floats(-0.6, 0.6), min_size=4, max_size=4),
    ax=st.floats(0, 2 * math.pi),
    ay=st.floats(0, 2 * math.pi),
    s=st.floats(0, 2 * math.pi),
)
def test_angle_reconstruction(pts, ax, ay, s):
    x, y = np.array(pts[:2]), np.array(pts[2:])
    if np.linalg.norm(x - y) < 1e-6:
        return
    z = boundary_frame(Disk(1.0), s)
    X = np.array([math.cos(ax), math.sin(ax)])
    Y = np.array([math.cos(ay), math.sin(ay)])
    a = angles_at(Disk(1.0), x, y, z, X, Y)
    assert angle_reconstruction_residual(a, x, y, z, X, Y) < 1e-10
    for v in a.as_dict().values():
        assert -math.pi < v <= math.pi


@settings(max_examples=40, deadline=None)
@given(ax=st.floats(0, 2 * math.pi), x=st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)))
def test_equal_directions_give_equal_alphas(ax, x):
    X = np.array([math.cos(ax), math.sin(ax)])
    y = np.array([0.11, -0.07])
    if np.linalg.norm(np.array(x) - y) < 1e-6:
        return
    a = angles_at(None, x, y, boundary_frame(Disk(), 0.0), X, X)
    assert math.cos(a.alpha_x - a.alpha_y) == pytest.approx(1.0, abs=1e-12)


def test_coincident_points_name_the_angle():
    z = boundary_frame(Disk(), 0.0)
    with pytest.raises(DegenerateConfigurationError, match="alpha"):
        angles_at(None, (0.1, 0.1), (0.1, 0.1), z, (1, 0), (1, 0))
    with pytest.raises(DegenerateConfigurationError, match="beta_x"):
        angles_at(None, z.point, (0.1, 0.1), z, (1, 0), (1, 0))


@pytest.mark.parametrize("dom", DOMAINS[1:4], ids=lambda d: d.kind)
def test_translation_and_scaling_are_consistent(dom):
    v = np.array([0.7, -1.1])
    moved = dom.translated(v)
    f0, f1 = dom.frame(0.4), moved.frame(0.4)
    assert np.allclose(f1.point, f0.point + v)
    big = dom.scaled(3.0)
    assert big.boundary_length == pytest.approx(3 * dom.boundary_length)
    assert big.frame(1.2).curvature == pytest.approx(dom.frame(0.4).curvature / 3)


def test_contains_and_margin():
    d = Disk(1.0)
    pts = np.array([[0.0, 0.0], [0.999, 0.0], [1.0, 0.0], [1.2, 0.0]])
    assert list(d.contains(pts)) == [True, True, False, False]
    assert not d.contains(pts[1:2], margin=0.01)[0]
    hp = HalfPlane()
    assert list(hp.contains(np.array([[0, 1.0], [5, -1e-3]]))) == [True, False]
