from __future__ import annotations

import time
from pathlib import Path

import pytest

from fbcsf.cli import Experiment, load_config
from fbcsf.flow import StopConfig, run

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def _run_config(name: str, **stop):
    exp = Experiment(load_config(EXPERIMENTS / f"{name}.json"))
    if stop:
        exp.flow.stop = StopConfig(**stop)
    t0 = time.perf_counter()
    trace = run(exp.curve, exp.flow, exp.phi)
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def semicircle_run():
    """Half-plane semicircle, r0 = 1, N = 400, down to L = 0.3 pi; returns (trace, seconds)."""
    return _run_config("semicircle_halfplane")


@pytest.fixture(scope="session")
def odd_diameter_run():
    return _run_config("perturbed_diameter")


@pytest.fixture(scope="session")
def even_diameter_run():
    # the even bump leaves the diameter; once L < 1.9 no diameter is reachable
    return _run_config("perturbed_diameter_even", length_below=1.9)


@pytest.fixture(scope="session")
def boundary_arc_run():
    return _run_config("boundary_arc")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
