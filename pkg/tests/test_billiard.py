from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbcsf.billiard import distance_first_second_variations, reflected_distance, reflected_distance_batch
from fbcsf.domain import Disk, Ellipse, GeometryError, HalfPlane

from . import oracles


def test_half_plane_mirror_example():
    r = reflected_distance(HalfPlane(), (0, 1), (2, 1))
    assert r.distance == pytest.approx(2 * math.sqrt(2), abs=1e-15)
    assert np.allclose(r.bounce.point, [1, 0])


def test_disk_doubled_radial_segment():
    r = reflected_distance(Disk(1.0), (0.5, 0), (0.5, 0))
    assert r.distance == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(r.bounce.point, [1, 0], atol=1e-9)


def test_disk_symmetric_bounce_matches_frozen_scan():
    r = reflected_distance(Disk(1.0), (0.5, 0), (0, 0.5))
    assert r.distance == pytest.approx(oracles.DISK_BOUNCE_DISTANCE, abs=1e-12)
    ang = math.atan2(r.bounce.point[1], r.bounce.point[0])
    assert ang == pytest.approx(oracles.DISK_BOUNCE_ANGLE, abs=1e-7)


@pytest.mark.parametrize(
    "dom, x",
    [
        (Disk(1.0), (1.0, 0.0)),
        (Disk(1.0), (3.0, 3.0)),
        (Ellipse(2.0, 1.0), (2.0, 0.0)),
        (Ellipse(2.0, 1.0), (0.0, 1.5)),
        (HalfPlane(), (0.4, 0.0)),
        (HalfPlane(), (0.0, -0.5)),
    ],
)
def test_points_on_or_outside_boundary_are_rejected(dom, x):
    y = (0.1, 0.2)
    with pytest.raises(GeometryError):
        reflected_distance(dom, x, y)


@settings(max_examples=100, deadline=None)
@given(
    r1=st.floats(0.0, 0.97), a1=st.floats(0, 2 * math.pi),
    r2=st.floats(0.0, 0.97), a2=st.floats(0, 2 * math.pi),
    ell=st.booleans(),
)
def test_invariants(r1, a1, r2, a2, ell):
    dom = Ellipse(2.0, 0.8) if ell else Disk(1.0)
    ax, bx = (2.0, 0.8) if ell else (1.0, 1.0)
    x = np.array([r1 * ax * math.cos(a1), r1 * bx * math.sin(a1)])
    y = np.array([r2 * ax * math.cos(a2), r2 * bx * math.sin(a2)])
    r = reflected_distance(dom, x, y)
    assert r.distance == pytest.approx(r.d_x + r.d_y, rel=1e-12)
    assert r.snell_residual < 1e-8
    # dominance and exact symmetry
    assert r.distance >= np.linalg.norm(x - y) - 1e-12
    assert reflected_distance(dom, y, x).distance == r.distance
    # triangle consistency through a random interior point
    w = 0.5 * (x + y) * 0.9
    assert r.distance <= np.linalg.norm(x - w) + reflected_distance(dom, w, y).distance + 1e-12


def test_snell_angles_are_opposite():
    r = reflected_distance(Ellipse(2.0, 1.0), (0.3, 0.2), (-0.9, -0.1))
    assert math.sin(r.theta_x) == pytest.approx(-math.sin(r.theta_y), abs=1e-8)
    assert math.cos(r.theta_x) < 0


@pytest.mark.parametrize("seed", range(5))
def test_batch_matches_dense_scan(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.5, 3.0, size=2)
    dom = Ellipse(a, b) if a != b else Disk(a)
    rad = rng.uniform(0, 0.95, size=(20, 2))
    ang = rng.uniform(0, 2 * math.pi, size=(20, 2))
    x = np.column_stack([rad[:, 0] * a * np.cos(ang[:, 0]), rad[:, 0] * b * np.sin(ang[:, 0])])
    y = np.column_stack([rad[:, 1] * a * np.cos(ang[:, 1]), rad[:, 1] * b * np.sin(ang[:, 1])])
    res = reflected_distance_batch(dom, x, y)
    for k in range(20):
        ref, _ = oracles.reflected_distance_scan(a, b, x[k], y[k])
        assert abs(res["distance"][k] - ref) <= 1e-6 * ref


def test_half_plane_exact_against_mirror_formula():
    rng = np.random.default_rng(7)
    hp = HalfPlane((0.3, -0.2))
    x = rng.uniform(-5, 5, size=(500, 2))
    y = rng.uniform(-5, 5, size=(500, 2))
    x[:, 1] = np.abs(x[:, 1]) + 0.01 - 0.2
    y[:, 1] = np.abs(y[:, 1]) + 0.01 - 0.2
    res = reflected_distance_batch(hp, x, y)
    mirror = y.copy()
    mirror[:, 1] = -0.4 - y[:, 1]
    exact = np.linalg.norm(x - mirror, axis=1)
    assert np.max(np.abs(res["distance"] - exact) / exact) < 1e-12


def test_multiplicity_flag_on_symmetric_configuration():
    # on the disk's symmetry axis, bounces at +-angle tie when the points are close to the centre line
    r = reflected_distance(Disk(1.0), (0.0, 0.0), (0.0, 0.0))
    assert r.multiple
    assert not reflected_distance(Disk(1.0), (0.5, 0.0), (0.5, 0.0)).multiple


# -- variations of |x - y| ----------------------------------------------------


def test_variation_examples():
    v = distance_first_second_variations((1, 0), (0, 0), (1, 0), (1, 0))
    assert v.dx == pytest.approx(1.0)
    w = distance_first_second_variations((1, 0), (0, 0), (0, 1), (0, 1))
    assert w.dx == pytest.approx(0.0, abs=1e-15)
    assert w.dxx == pytest.approx(1.0)


def test_variation_on_diagonal_raises():
    with pytest.raises(GeometryError):
        distance_first_second_variations((1, 0), (1, 0), (1, 0), (0, 1))


@settings(max_examples=100, deadline=None)
@given(
    c=st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    ax=st.floats(0, 2 * math.pi),
    ay=st.floats(0, 2 * math.pi),
)
def test_variations_match_finite_differences(c, ax, ay):
    x, y = np.array(c[:2]), np.array(c[2:])
    if np.linalg.norm(x - y) < 0.2:
        return
    X = np.array([math.cos(ax), math.sin(ax)])
    Y = np.array([math.cos(ay), math.sin(ay)])
    v = distance_first_second_variations(x, y, X, Y)
    fd = oracles.distance_fd(x, y, X, Y)
    for k in ("dx", "dy", "dxx", "dyy", "dxy"):
        assert getattr(v, k) == pytest.approx(fd[k], abs=1e-7)
