from __future__ import annotations

import dataclasses
import json
import math

import pytest

from fbcsf.chord_arc import ConfigError
from fbcsf.curve import perturbed_chord
from fbcsf.domain import Disk
from fbcsf.flow import FlowConfig, StopConfig, run
from fbcsf.verification import (
    BarrierCheckConfig,
    CheckReport,
    check_barrier_preservation,
    check_boundary_avoidance,
    check_crude_bound,
    check_grayson_dichotomy,
    check_monotonicity,
    last_reliable_snapshot,
    run_checks,
)

from .shapes import arch


@pytest.mark.parametrize("kw", [{"c": 0.02}, {"c": 0.0}, {"eps": 0.1}, {"eps": -0.01}])
def test_barrier_config_ranges(kw):
    with pytest.raises(ConfigError):
        BarrierCheckConfig(**kw)


def test_report_json_is_plain():
    r = CheckReport("x", None, "inapplicable", residuals={"a": math.nan, "b": math.inf, "c": 1.0})
    js = r.to_json()
    assert js["residuals"] == {"a": None, "b": "inf", "c": 1.0}
    assert r.ok
    assert not CheckReport("x", False, "fail").ok
    json.dumps(js, allow_nan=False)


def test_unknown_check_name():
    tr = run(perturbed_chord(Disk(), 0.0, math.pi, 20, 0.05), FlowConfig(stop=StopConfig(max_steps=0)))
    with pytest.raises(ConfigError):
        run_checks(tr, ["grayson_dichotomy", "sturm"])


# -- barrier ------------------------------------------------------------------------


def test_barrier_preserved_on_half_plane_semicircle(semicircle_run):
    trace, _ = semicircle_run
    r = check_barrier_preservation(trace, BarrierCheckConfig(0.005, 0.05))
    assert r.status == "pass" and r.passed
    assert r.hypothesis_held
    assert "scale invariant" in r.notes
    assert r.residuals["scan_vertices"] == 401


def test_barrier_is_empirical_on_curved_boundary(boundary_arc_run):
    trace, _ = boundary_arc_run
    r = check_barrier_preservation(trace, BarrierCheckConfig(0.005, 0.05, enforce_hypothesis=True))
    assert r.hypothesis_held is False
    assert r.status == "pass_empirical"
    assert r.residuals["sup_boundary_curvature"] == pytest.approx(1.0)


def test_barrier_violated_at_start_makes_no_claim():
    # the feet of a thin arch are 0.02 apart, closer than the barrier allows
    trace = run(arch(0.01, 1.0, 2400), FlowConfig(stop=StopConfig(max_steps=0)))
    r = check_barrier_preservation(trace, BarrierCheckConfig(0.0099, 0.05))
    assert r.status == "hypothesis_at_t0_failed"
    assert r.passed is None and r.ok
    assert r.residuals["min_Z_t0"] < -r.tolerances["Z_t0"]


# -- crude bound -------------------------------------------------------------------


def test_crude_bound_short_run():
    c = perturbed_chord(Disk(), 0.0, math.pi, 100, 0.05, parity="odd")
    trace = run(c, FlowConfig(output_interval=0.005, stop=StopConfig(time_at=0.05)))
    r = check_crude_bound(trace)
    assert r.passed, r.to_json()
    assert r.residuals["c0"] > 0


def test_crude_bound_at_initial_time_holds_by_construction():
    c = perturbed_chord(Disk(), 0.0, math.pi, 60, 0.2, 2)
    trace = run(c, FlowConfig(stop=StopConfig(max_steps=0)))
    r = check_crude_bound(trace)
    assert r.passed
    assert r.residuals["worst_margin_plus_tol"] == pytest.approx(r.tolerances["tol_max"], abs=1e-12)


def test_crude_bound_inapplicable_on_extinction(semicircle_run):
    r = check_crude_bound(semicircle_run[0])
    assert r.status == "inapplicable" and r.passed is None


# -- dichotomy -----------------------------------------------------------------------


def test_dichotomy_indeterminate_on_budget_stop():
    c = perturbed_chord(Disk(), 0.0, math.pi, 40, 0.05)
    trace = run(c, FlowConfig(stop=StopConfig(max_steps=10)))
    assert trace.classification == "budget_exhausted"
    r = check_grayson_dichotomy(trace)
    assert r.status == "indeterminate" and r.passed is None


def test_dichotomy_chord_case(odd_diameter_run):
    r = check_grayson_dichotomy(odd_diameter_run[0])
    assert r.status == "chord_pass", r.to_json()
    assert r.residuals["hausdorff_to_critical_chord"] < r.tolerances["hausdorff"]


@pytest.mark.parametrize("fixture", ["semicircle_run", "boundary_arc_run"])
def test_dichotomy_extinction_case(fixture, request):
    trace, _ = request.getfixturevalue(fixture)
    r = check_grayson_dichotomy(trace)
    assert r.status == "extinction_pass", r.to_json()
    ref = last_reliable_snapshot(trace)
    assert trace.T_est - ref.t >= 20 * trace.T_sigma


# -- monotonicity, avoidance ---------------------------------------------------------


@pytest.mark.parametrize("fixture", ["semicircle_run", "odd_diameter_run", "boundary_arc_run"])
def test_monotonicity_on_runs(fixture, request):
    r = check_monotonicity(request.getfixturevalue(fixture)[0])
    assert r.passed, r.to_json()


def test_monotonicity_detects_growing_length(semicircle_run):
    trace, _ = semicircle_run
    backwards = dataclasses.replace(trace, snapshots=trace.snapshots[::-1])
    r = check_monotonicity(backwards)
    assert not r.passed
    assert not r.residuals["length_ok"]


def test_boundary_avoidance_on_chord_run(odd_diameter_run):
    r = check_boundary_avoidance(odd_diameter_run[0])
    assert r.passed, r.to_json()
    assert 0 < r.residuals["c_hat"] < 1


def test_checks_are_deterministic(odd_diameter_run):
    trace, _ = odd_diameter_run
    a = [x.to_json() for x in run_checks(trace, ["grayson_dichotomy", "monotonicity"])]
    b = [x.to_json() for x in run_checks(trace, ["grayson_dichotomy", "monotonicity"])]
    assert json.dumps(a) == json.dumps(b)
