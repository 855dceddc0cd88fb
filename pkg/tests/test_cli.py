from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from fbcsf import cli
from fbcsf.cli import EXIT_CHECK, EXIT_INPUT, EXIT_OK, EXIT_RUNTIME, main

from .conftest import EXPERIMENTS
from . import oracles


def _config(tmp_path, **over):
    cfg = {
        "name": "small",
        "domain": {"kind": "half_plane"},
        "curve": {"type": "semicircle", "radius": 1.0, "n_edges": 60},
        "flow": {"output_interval": 0.01, "stop": {"length_below": 0.3 * math.pi}},
        "checks": ["grayson_dichotomy", "monotonicity"],
        "profile": {"n_bins": 32},
    }
    cfg.update(over)
    p = tmp_path / f"{cfg['name']}.json"
    p.write_text(json.dumps(cfg))
    return p


def test_run_writes_artifacts(tmp_path, capsys):
    cfg = _config(tmp_path, svg={"frames": True, "every": 10})
    assert main(["run", str(cfg), "-o", str(tmp_path / "out")]) == EXIT_OK
    out = tmp_path / "out" / "small"
    names = {p.name for p in out.iterdir()}
    assert {"config.json", "snapshots.ndjson", "checks.json", "summary.json",
            "profile_initial.csv", "profile_initial.json", "profile_final.csv"} <= names
    summary = json.loads((out / "summary.json").read_text())
    assert summary["classification"] == "extinction_suspected"
    assert summary["failed_checks"] == []
    assert summary["svg_frames"] > 0
    assert (out / "frames" / "frame_00000.svg").read_text().startswith("<svg")
    first = json.loads((out / "snapshots.ndjson").read_text().splitlines()[0])
    assert set(first) == {"t", "step", "endpoint_params", "vertices", "diagnostics"}
    assert "grayson_dichotomy: extinction_pass" in capsys.readouterr().out


def test_ndjson_is_bit_reproducible(tmp_path):
    cfg = _config(tmp_path, curve={"type": "perturbed_chord", "s0": 0.0, "s1": 3.0, "n_edges": 40,
                                   "amplitude": 0.05, "noise": 0.05},
                  domain={"kind": "disk", "radius": 1.0}, flow={"stop": {"time_at": 0.02}},
                  checks=[], seed=7)
    main(["run", str(cfg), "-o", str(tmp_path / "a")])
    main(["run", str(cfg), "-o", str(tmp_path / "b")])
    a = (tmp_path / "a" / "small" / "snapshots.ndjson").read_bytes()
    b = (tmp_path / "b" / "small" / "snapshots.ndjson").read_bytes()
    assert a == b


def test_seed_changes_noisy_start(tmp_path):
    curve = {"type": "perturbed_chord", "s0": 0.0, "s1": 3.0, "n_edges": 40, "amplitude": 0.05, "noise": 0.05}
    c1 = cli.Experiment(cli.load_config(_config(tmp_path, curve=curve, seed=1))).curve
    c2 = cli.Experiment(cli.load_config(_config(tmp_path, curve=curve, seed=2))).curve
    assert not np.allclose(c1.vertices, c2.vertices)


def test_failed_check_exit_code(tmp_path):
    cfg = _config(tmp_path, flow={"stop": {"max_steps": 5}})
    assert main(["run", str(cfg), "-o", str(tmp_path)]) == EXIT_CHECK
    summary = json.loads((tmp_path / "small" / "summary.json").read_text())
    assert summary["failed_checks"] == ["grayson_dichotomy"]


def test_missing_domain_field_path(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"name": "x", "curve": {"type": "semicircle", "n_edges": 10}}))
    assert main(["validate", str(p)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "domain" in err and "Field required" in err


@pytest.mark.parametrize(
    "text, needle",
    [
        ('{"name": "x",\n "domain": ', "2:"),
        ('{"name": "x", "domain": {"kind": "disk"}, "curve": {"type": "chord", "n_edges": 10}, "bogus": 1}', "bogus"),
        ('{"name": "x", "domain": {"kind": "disk"}, "curve": {"type": "chord", "n_edges": 10}, "checks": ["sturm"]}',
         "checks"),
        ('{"name": "x", "domain": {"kind": "disk"}, "curve": {"type": "chord", "s0": 0, "s1": 3, "n_edges": 10},'
         ' "phi": {"kind": "barrier", "c": 0.5, "eps": 0.05}}', "phi"),
        ('{"name": "x", "domain": {"kind": "disk"}, "curve": {"type": "chord", "n_edges": 10}}', "curve.s0"),
    ],
    ids=["json_syntax", "extra_key", "unknown_check", "inadmissible_phi", "missing_curve_field"],
)
def test_config_diagnostics(tmp_path, capsys, text, needle):
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["validate", str(p)]) == EXIT_INPUT
    assert needle in capsys.readouterr().err


def test_runtime_error_is_recorded(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(cli, "run", boom)
    assert main(["run", str(_config(tmp_path)), "-o", str(tmp_path)]) == EXIT_RUNTIME
    summary = json.loads((tmp_path / "small" / "summary.json").read_text())
    assert summary["status"] == "runtime_error"
    assert "solver exploded" in summary["error"]


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = cli.load_config(_config(tmp_path, output_dir=str(tmp_path / "from_config")))
    assert cli.resolve_output_dir(cfg) == tmp_path / "from_config" / "small"
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "from_env"))
    assert cli.resolve_output_dir(cfg) == tmp_path / "from_env" / "small"
    assert cli.resolve_output_dir(cfg, str(tmp_path / "flag")) == tmp_path / "flag" / "small"


def test_print_defaults_round_trips(capsys, tmp_path):
    assert main(["print-defaults"]) == EXIT_OK
    text = capsys.readouterr().out
    p = tmp_path / "defaults.json"
    p.write_text(text)
    assert main(["validate", str(p)]) == EXIT_OK


@pytest.mark.parametrize("path", sorted(EXPERIMENTS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_experiments_validate(path):
    assert main(["validate", str(path)]) == EXIT_OK


# -- profile subcommand -----------------------------------------------------------


def _semicircle_file(tmp_path, n=400):
    a = np.linspace(0.0, math.pi, n + 1)
    p = tmp_path / "semi.txt"
    np.savetxt(p, np.column_stack([np.cos(a), np.sin(a)]))
    return p


def test_profile_of_semicircle_file(tmp_path):
    f = _semicircle_file(tmp_path)
    code = main(["profile", str(f), "--domain", '{"kind": "half_plane"}', "-o", str(tmp_path), "--name", "p"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "p.csv")))
    delta = np.array([float(r["delta"]) for r in rows])
    psi = np.array([float(r["psi"]) for r in rows])
    assert np.max(np.abs(psi - oracles.circle_profile(delta))) < 1e-3


def test_profile_of_chord_uses_classical_branch_for_small_delta(tmp_path):
    f = tmp_path / "chord.json"
    v = np.column_stack([np.linspace(1, -1, 41), np.zeros(41)])
    f.write_text(json.dumps({"vertices": v.tolist(), "domain": {"kind": "disk", "radius": 1.0}}))
    assert main(["profile", str(f), "-o", str(tmp_path), "--bins", "16"]) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "chord_profile.csv")))
    assert rows[0]["branch"] == "classical"
    assert float(rows[0]["psi"]) == pytest.approx(float(rows[0]["delta"]))


def test_profile_with_phi_reports_conditions(tmp_path):
    f = _semicircle_file(tmp_path, 100)
    phi = '{"kind": "barrier", "c": 0.005, "eps": 0.05}'
    assert main(["profile", str(f), "--domain", '{"kind": "half_plane"}', "--phi", phi,
                 "-o", str(tmp_path), "--name", "q"]) == EXIT_OK
    body = json.loads((tmp_path / "q.json").read_text())
    assert body["min_Z"] > 0
    assert body["minimum_conditions"]["case"] == "inconclusive"


def test_profile_empty_vertex_list(tmp_path, capsys):
    f = tmp_path / "empty.json"
    f.write_text('{"vertices": [], "domain": {"kind": "disk"}}')
    assert main(["profile", str(f)]) == EXIT_INPUT
    assert "empty vertex list" in capsys.readouterr().err


def test_profile_endpoint_off_boundary(tmp_path, capsys):
    f = tmp_path / "off.txt"
    np.savetxt(f, np.array([[1.0, 0.0], [0.0, 0.2], [-0.9, 0.0]]))
    assert main(["profile", str(f), "--domain", '{"kind": "disk"}']) == EXIT_INPUT
    assert "boundary" in capsys.readouterr().err


# -- shipped experiments -----------------------------------------------------------


@pytest.mark.parametrize("name", ["semicircle_halfplane", "perturbed_diameter"])
def test_acceptance_experiments_exit_zero(name, tmp_path):
    assert main(["run", str(EXPERIMENTS / f"{name}.json"), "-o", str(tmp_path)]) == EXIT_OK
