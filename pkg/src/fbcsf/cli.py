"""Command line entry point: ``fbcsf run|profile|print-defaults|validate``.

Exit codes: 0 success, 1 a requested check failed, 2 invalid input,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .chord_arc import ConfigError, check_minimum_conditions, extended_profile, phi_from_spec
from .curve import DiscreteCurve, curve_from_spec
from .domain import GeometryError, domain_from_spec
from .flow import FlowConfig, FlowTrace, rescale, run
from .svg import frame_svg
from .verification import BarrierCheckConfig, CheckReport, run_checks

log = logging.getLogger("fbcsf")

OUTPUT_ENV = "FBCSF_OUTPUT_DIR"
EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3
OK_STATUSES = {"inapplicable", "hypothesis_at_t0_failed"}
CHECK_NAMES = ("barrier_preservation", "crude_bound", "grayson_dichotomy", "monotonicity", "boundary_avoidance")


class InputError(ValueError):
    """Bad configuration or input file; carries printable diagnostics."""

    def __init__(self, lines):
        self.lines = [lines] if isinstance(lines, str) else list(lines)
        super().__init__("; ".join(self.lines))


# -- configuration schema ---------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainModel(_Strict):
    kind: Literal["half_plane", "disk", "ellipse", "sampled"]
    center: tuple[float, float] = (0.0, 0.0)
    radius: float | None = Field(default=None, gt=0)
    a: float | None = Field(default=None, gt=0)
    b: float | None = Field(default=None, gt=0)
    points: list[tuple[float, float]] | None = None


class CurveModel(_Strict):
    type: Literal["vertices", "chord", "perturbed_chord", "boundary_arc", "semicircle"]
    n_edges: int = Field(default=200, ge=3)
    vertices: list[tuple[float, float]] | None = None
    snap: bool = False
    s0: float | None = None
    s1: float | None = None
    amplitude: float | None = None
    bumps: int | None = Field(default=None, ge=1)
    parity: Literal["even", "odd"] | None = None
    s: float | None = None
    radius: float | None = Field(default=None, gt=0)
    angular_extent: float | None = Field(default=None, gt=0, lt=math.pi)
    x0: float | None = None
    noise: float = Field(default=0.0, ge=0.0)


class StopModel(_Strict):
    length_below: float | None = Field(default=None, gt=0)
    time_at: float | None = Field(default=None, gt=0)
    min_Z_negative: bool = False
    max_steps: int | None = Field(default=2_000_000, ge=0)


class FlowModel(_Strict):
    dt_safety: float = Field(default=0.2, gt=0, le=0.5)
    remesh_every: int = Field(default=0, ge=0)
    target_edge_count: int | None = Field(default=None, ge=8)
    stop: StopModel = StopModel()
    output_interval: float = Field(default=0.01, gt=0)
    tol_orth: float = Field(default=1e-6, gt=0)
    max_retries: int = Field(default=20, ge=0)
    profile_vertices: int = Field(default=64, ge=8)
    profile_bins: int = Field(default=32, ge=16)
    record_profiles: bool = False


class PhiModel(_Strict):
    kind: Literal["barrier", "scaled_sine", "tabulated"]
    c: float | None = None
    eps: float | None = None
    tau: float | None = None
    values: list[float] | None = None


class BarrierModel(_Strict):
    c: float = 0.005
    eps: float = 0.05
    enforce_hypothesis: bool = False


class ProfileModel(_Strict):
    n_bins: int = Field(default=64, ge=16)
    vertices: int | None = Field(default=None, ge=8)


class SvgModel(_Strict):
    frames: bool = False
    every: int = Field(default=10, ge=1)


class ExperimentConfig(_Strict):
    name: str = "experiment"
    domain: DomainModel
    curve: CurveModel
    flow: FlowModel = FlowModel()
    phi: PhiModel | None = None
    checks: list[str] = Field(default_factory=list)
    barrier: BarrierModel = BarrierModel()
    profile: ProfileModel = ProfileModel()
    svg: SvgModel = SvgModel()
    output_dir: str = "runs"
    seed: int = 0

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, v):
        bad = [c for c in v if c not in CHECK_NAMES]
        if bad:
            raise ValueError(f"unknown checks {bad}; choose from {list(CHECK_NAMES)}")
        return v


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


def default_config() -> dict:
    cfg = ExperimentConfig(
        name="semicircle_halfplane",
        domain=DomainModel(kind="half_plane"),
        curve=CurveModel(type="semicircle", n_edges=400, radius=1.0),
        flow=FlowModel(output_interval=0.01, stop=StopModel(length_below=0.3 * math.pi)),
        checks=["grayson_dichotomy", "monotonicity", "barrier_preservation"],
    )
    return cfg.model_dump(mode="json")


# -- loading -------------------------------------------------------------------------


def _format_loc(loc) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (("." if out else "") + str(part))
    return out or "<root>"


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise InputError([f"{path}: {_format_loc(e['loc'])}: {e['msg']}" for e in exc.errors()]) from exc


class Experiment:
    """Objects built from a validated config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.domain = _build("domain", lambda: domain_from_spec(_drop_none(cfg.domain.model_dump())))
        self.curve = _build("curve", lambda: _initial_curve(cfg, self.domain))
        self.phi = _build("phi", lambda: phi_from_spec(_drop_none(cfg.phi.model_dump())) if cfg.phi else None)
        self.flow = _build("flow", lambda: FlowConfig(**cfg.flow.model_dump()))
        self.barrier = _build("barrier", lambda: BarrierCheckConfig(**cfg.barrier.model_dump()))


def _build(where: str, fn):
    try:
        return fn()
    except (GeometryError, ConfigError, KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, KeyError):
            raise InputError(f"{where}.{exc.args[0]}: missing field") from exc
        raise InputError(f"{where}: {exc}") from exc


def _initial_curve(cfg: ExperimentConfig, domain) -> DiscreteCurve:
    spec = _drop_none(cfg.curve.model_dump())
    curve = curve_from_spec(spec, domain)
    if cfg.curve.noise > 0.0:
        # seeded normal jitter of interior vertices, scaled by the mean edge
        rng = np.random.default_rng(cfg.seed)
        V = curve.vertices.copy()
        h = curve.length / curve.n_edges
        V[1:-1] += cfg.curve.noise * h * rng.standard_normal((len(V) - 2, 2))
        curve = curve.with_vertices(V, curve.endpoint_params)
    return curve


def resolve_output_dir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    base = override or os.environ.get(OUTPUT_ENV) or cfg.output_dir
    return Path(base) / cfg.name


# -- run -----------------------------------------------------------------------------


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _write_profile(curve, exp: Experiment, out: Path, stem: str) -> dict:
    rep = extended_profile(curve, exp.cfg.profile.n_bins, phi=exp.phi, subsample=exp.cfg.profile.vertices)
    rep.write_csv(out / f"{stem}.csv")
    body = rep.to_json()
    if exp.phi is not None:
        body["minimum_conditions"] = check_minimum_conditions(curve, exp.phi, rep).to_json()
    _dump(out / f"{stem}.json", _finite(body))
    return body


def _write_frames(trace: FlowTrace, every: int, out: Path) -> int:
    frames = out / "frames"
    frames.mkdir(exist_ok=True)
    n = 0
    for k, snap in enumerate(trace.snapshots):
        if k % every and k != len(trace.snapshots) - 1:
            continue
        inset = None
        if trace.T_est is not None and trace.z_est is not None and snap.t < trace.T_est:
            r = rescale(snap.curve, trace.z_est, trace.T_est, snap.t)
            s = snap.curve.domain.project(np.array([trace.z_est]))[0][0]
            f = snap.curve.domain.frame(float(s))
            inset = np.column_stack([r.vertices @ f.tangent, r.vertices @ -f.outward_normal])
        (frames / f"frame_{k:05d}.svg").write_text(frame_svg(snap.curve, snap.t, inset))
        n += 1
    return n


def run_experiment(cfg: ExperimentConfig, out_override: str | None = None) -> int:
    exp = Experiment(cfg)
    out = resolve_output_dir(cfg, out_override)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "config.json", cfg.model_dump(mode="json"))
    try:
        return _run_into(exp, out)
    except Exception as exc:
        _dump(out / "summary.json", {"name": cfg.name, "status": "runtime_error",
                                      "error": f"{type(exc).__name__}: {exc}"})
        raise


def _run_into(exp: Experiment, out: Path) -> int:
    cfg = exp.cfg
    log.info("running %s into %s", cfg.name, out)
    t0 = time.perf_counter()
    trace = run(exp.curve, exp.flow, exp.phi)
    log.info("flow finished in %.2f s: %s after %d steps", time.perf_counter() - t0, trace.classification, trace.steps)
    trace.write_ndjson(out / "snapshots.ndjson")

    _write_profile(trace.snapshots[0].curve, exp, out, "profile_initial")
    try:
        _write_profile(trace.final.curve, exp, out, "profile_final")
    except (GeometryError, ConfigError, ValueError) as exc:
        log.warning("final profile skipped: %s", exc)

    reports: list[CheckReport] = run_checks(trace, cfg.checks, exp.barrier)
    _dump(out / "checks.json", [r.to_json() for r in reports])
    n_frames = _write_frames(trace, cfg.svg.every, out) if cfg.svg.frames else 0

    failed = [r.check for r in reports if r.passed is False or (r.passed is None and r.status not in OK_STATUSES)]
    summary = trace.summary()
    summary.update(
        name=cfg.name,
        checks={r.check: r.status for r in reports},
        failed_checks=failed,
        svg_frames=n_frames,
    )
    _dump(out / "summary.json", _finite(summary))
    for r in reports:
        print(f"{r.check}: {r.status}")
    print(f"classification: {trace.classification}  output: {out}")
    return EXIT_CHECK if failed else EXIT_OK


# -- profile -------------------------------------------------------------------------


def _read_json_arg(value: str, what: str):
    """Inline JSON or a path to a JSON file."""
    if value.lstrip().startswith(("{", "[")):
        text = value
    else:
        try:
            text = Path(value).read_text()
        except OSError as exc:
            raise InputError(f"{what}: cannot read {value}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_curve_file(path, domain_spec: dict | None = None) -> DiscreteCurve:
    """Curve from JSON (``{"vertices": [...], "domain": {...}}``) or whitespace ``x y`` rows."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read curve file: {exc.strerror}") from exc
    if text.lstrip().startswith(("{", "[")):
        data = _read_json_arg(text, str(path))
        if isinstance(data, dict):
            verts = data.get("vertices")
            domain_spec = domain_spec or data.get("domain")
        else:
            verts = data
    else:
        try:
            verts = np.loadtxt(path.open(), ndmin=2).tolist() if text.strip() else []
        except ValueError as exc:
            raise InputError(f"{path}: cannot parse vertex rows: {exc}") from exc
    if not verts:
        raise InputError(f"{path}: empty vertex list")
    if domain_spec is None:
        raise InputError(f"{path}: no domain given (use --domain or a 'domain' key in the file)")
    domain = _build("domain", lambda: domain_from_spec(domain_spec))
    return _build(str(path), lambda: DiscreteCurve.from_vertices(verts, domain))


def profile_only(args) -> int:
    domain_spec = _read_json_arg(args.domain, "--domain") if args.domain else None
    curve = load_curve_file(args.curve, domain_spec)
    phi = _build("phi", lambda: phi_from_spec(_read_json_arg(args.phi, "--phi"))) if args.phi else None
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or Path(args.curve).stem + "_profile"
    rep = extended_profile(curve, args.bins, phi=phi, subsample=args.vertices)
    rep.write_csv(out / f"{stem}.csv")
    body = rep.to_json()
    if phi is not None:
        body["minimum_conditions"] = check_minimum_conditions(curve, phi, rep).to_json()
    _dump(out / f"{stem}.json", _finite(body))
    print(f"profile: {out / (stem + '.csv')}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbcsf", description="Free boundary curve shortening experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config", help="experiment JSON file")
    r.add_argument("-o", "--output-dir", help=f"output base directory (overrides ${OUTPUT_ENV} and the config)")

    pr = sub.add_parser("profile", help="extended profile of a static curve")
    pr.add_argument("curve", help="curve file: JSON with 'vertices' (and optionally 'domain') or 'x y' rows")
    pr.add_argument("--domain", help="domain spec as inline JSON or a file path")
    pr.add_argument("--phi", help="comparison function spec as inline JSON or a file path")
    pr.add_argument("--bins", type=int, default=64)
    pr.add_argument("--vertices", type=int, default=None, help="subsample the curve to this many vertices")
    pr.add_argument("--name", help="output file stem")
    pr.add_argument("-o", "--output-dir")

    sub.add_parser("print-defaults", help="print the default experiment config")

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "print-defaults":
            print(json.dumps(default_config(), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "validate":
            Experiment(load_config(args.config))
            print(f"{args.config}: ok")
            return EXIT_OK
        if args.command == "run":
            return run_experiment(load_config(args.config), args.output_dir)
        if args.command == "profile":
            return profile_only(args)
    except InputError as exc:
        for line in exc.lines:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        log.exception("runtime error")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
