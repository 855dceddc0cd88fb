"""Explicit front tracking for curve shortening flow with orthogonal contact.

Interior vertices move by ``-kappa N dt``; each end vertex is then placed at
the boundary foot of its neighbour so that the end segment lies along the
boundary normal.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from .chord_arc import ComparisonFunction, pair_table
from .curve import (
    DiscreteCurve,
    MeshError,
    endpoint_curvature_slopes,
    min_segment_separation,
    remesh,
    total_curvature,
)
from .domain import ConvexDomain, GeometryError, HalfPlane

__all__ = [
    "CFLError",
    "EstimationError",
    "StopConfig",
    "FlowConfig",
    "Snapshot",
    "FlowTrace",
    "step",
    "run",
    "extinction_estimate",
    "total_curvature_rate",
    "Rescaled",
    "rescale",
    "hausdorff",
    "fit_critical_chord",
]

log = logging.getLogger(__name__)

SHRINK_SNAPSHOT_RATIO = 0.97
EPS = np.finfo(float).eps


class CFLError(ValueError):
    """Time step above the explicit stability limit."""


class EstimationError(ValueError):
    """Extinction fit impossible (wrong classification or too few snapshots)."""


@dataclass
class StopConfig:
    length_below: float | None = None
    time_at: float | None = None
    min_Z_negative: bool = False
    max_steps: int | None = 2_000_000


@dataclass
class FlowConfig:
    dt_safety: float = 0.2
    remesh_every: int = 0
    target_edge_count: int | None = None
    stop: StopConfig = field(default_factory=StopConfig)
    output_interval: float = 0.01
    tol_orth: float = 1e-6
    max_retries: int = 20
    profile_vertices: int = 64
    profile_bins: int = 32
    record_profiles: bool = False

    def __post_init__(self):
        if isinstance(self.stop, dict):
            self.stop = StopConfig(**self.stop)
        if not 0.0 < self.dt_safety <= 0.5:
            raise ValueError("dt_safety must lie in (0, 0.5]")
        if self.target_edge_count is not None and self.target_edge_count < 8:
            raise ValueError("target_edge_count must be at least 8")
        if not self.output_interval > 0.0:
            raise ValueError("output_interval must be positive")
        if self.remesh_every < 0:
            raise ValueError("remesh_every must be >= 0")


# -- one explicit step ------------------------------------------------------------------


def _rotate(u, a):
    c, s = math.cos(a), math.sin(a)
    return np.array([c * u[0] - s * u[1], s * u[0] + c * u[1]])


def _velocity(V, n_left, n_right):
    """Curvature vectors ``kappa N`` at interior vertices (counterclockwise sign) and ``kappa``."""
    E = V[1:] - V[:-1]
    h = np.sqrt(E[:, 0] ** 2 + E[:, 1] ** 2)
    U = E / h[:, None]
    a, b = U[:-1], U[1:]
    phi = np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1])
    # turning between the boundary-normal direction and the end edges
    u0, u1 = U[0], U[-1]
    phi[0] += math.atan2(-n_left[0] * u0[1] + n_left[1] * u0[0], -n_left[0] * u0[0] - n_left[1] * u0[1])
    phi[-1] += math.atan2(u1[0] * n_right[1] - u1[1] * n_right[0], u1[0] * n_right[0] + u1[1] * n_right[1])
    w = 0.5 * (h[:-1] + h[1:])
    w[0] = h[0] + 0.5 * h[1]
    w[-1] = h[-1] + 0.5 * h[-2]
    k = phi / w
    B = a + b
    B /= np.sqrt(B[:, 0] ** 2 + B[:, 1] ** 2)[:, None]
    B[0] = _rotate(U[1], -0.5 * k[0] * h[1])
    B[-1] = _rotate(U[-2], 0.5 * k[-1] * h[-2])
    # kappa N = -kappa_ccw J T for T = J N
    vel = np.empty_like(B)
    vel[:, 0] = -k * B[:, 1]
    vel[:, 1] = k * B[:, 0]
    return vel, k, h


class _Stepper:
    """Mutable integrator state; snapshots are published as immutable curves."""

    def __init__(self, curve: DiscreteCurve, tol_orth: float):
        self.domain = curve.domain
        self.V = np.array(curve.vertices)
        self.s = [float(curve.endpoint_params[0]), float(curve.endpoint_params[1])]
        self.orientation = curve.orientation
        self.tol_orth = tol_orth
        f0, f1 = self.domain.frame(self.s[0]), self.domain.frame(self.s[1])
        self.frames = [f0, f1]
        self.margin = 0.0
        self.drift = 0.0
        self.refresh_margin()

    def refresh_margin(self):
        dom = self.domain
        sep = min_segment_separation(self.V)
        inner = self.V[1:-1]
        gaps = dom.project(inner)[1]
        if not np.all(dom.contains(inner)):
            gaps = np.zeros(1)
        self.margin = min(sep, float(np.min(gaps)))
        self.drift = 0.0
        return self.margin

    def curve(self) -> DiscreteCurve:
        return DiscreteCurve(self.V.copy(), self.domain, (self.s[0], self.s[1]), self.orientation)

    def h_min(self) -> float:
        E = np.diff(self.V, axis=0)
        return float(np.sqrt(np.min(E[:, 0] ** 2 + E[:, 1] ** 2)))

    def propose(self, dt):
        """Candidate state after one step; raises GeometryError on failure."""
        dom = self.domain
        f0, f1 = self.frames
        vel, _, _ = _velocity(self.V, f0.outward_normal, f1.outward_normal)
        V = self.V.copy()
        V[1:-1] += dt * vel
        s0 = dom.foot_parameter(V[1], self.s[0])
        s1 = dom.foot_parameter(V[-2], self.s[1])
        g0, g1 = dom.frame(s0), dom.frame(s1)
        V[0], V[-1] = g0.point, g1.point
        for g, a, b in ((g0, V[0], V[1]), (g1, V[-2], V[-1])):
            e = b - a
            ne = math.hypot(e[0], e[1])
            if ne == 0.0 or abs(float(e @ g.tangent)) / ne > self.tol_orth:
                raise GeometryError("orthogonality residual above tolerance after endpoint solve")
        move = dt * float(np.max(np.abs(vel))) * math.sqrt(2.0)
        move = max(move, float(np.max(np.abs(V[[0, -1]] - self.V[[0, -1]]))) * math.sqrt(2.0))
        return V, (s0, s1), (g0, g1), move

    def accept(self, V, s, frames, move):
        # cheap certificate: separation can shrink by at most twice the displacement
        if self.drift + move > 0.25 * self.margin:
            old = (self.V, self.margin, self.drift)
            self.V = V
            if self.refresh_margin() <= 0.0:
                self.V, self.margin, self.drift = old
                raise GeometryError("embeddedness lost")
        else:
            self.V = V
            self.drift += move
        self.s = [float(s[0]), float(s[1])]
        self.frames = list(frames)


def step(curve: DiscreteCurve, dt: float, dt_safety: float = 0.2, tol_orth: float = 1e-6) -> DiscreteCurve:
    """Advance ``curve`` by one explicit step of size ``dt``."""
    h = curve.h_min
    if dt > dt_safety * h * h * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:.3e} exceeds dt_safety*h_min^2={dt_safety * h * h:.3e}")
    st = _Stepper(curve, tol_orth)
    V, s, frames, move = st.propose(dt)
    st.accept(V, s, frames, move)
    return st.curve()


# -- traces -------------------------------------------------------------------------


@dataclass
class Snapshot:
    t: float
    step: int
    curve: DiscreteCurve
    L: float
    l2: float
    K: float
    travel: float
    kappa_max: float
    inflection_count: int
    vertex_count: int
    h_min: float
    h_max: float
    orthogonality: float
    neumann_residual: float
    remeshed: bool = False
    dLdt: float | None = None
    min_Z: float | None = None
    sine_ratio: float | None = None
    profile: dict | None = None
    K_tilde: float | None = None
    type_one: float | None = None

    @property
    def K_bold(self):
        return None if self.K_tilde is None else self.K + self.K_tilde

    def record(self) -> dict:
        diag = {
            "L": self.L,
            "int_kappa2": self.l2,
            "K": self.K,
            "K_tilde": self.K_tilde,
            "K_bold": self.K_bold,
            "boundary_travel": self.travel,
            "min_Z": self.min_Z,
            "sine_ratio": self.sine_ratio,
            "kappa_max": self.kappa_max,
            "type_one": self.type_one,
            "inflection_count": self.inflection_count,
            "vertex_count": self.vertex_count,
            "h_min": self.h_min,
            "h_max": self.h_max,
            "orthogonality": self.orthogonality,
            "neumann_residual": self.neumann_residual,
            "dLdt": self.dLdt,
            "remeshed": self.remeshed,
        }
        return {
            "t": self.t,
            "step": self.step,
            "endpoint_params": list(self.curve.endpoint_params),
            "vertices": self.curve.vertices.tolist(),
            "diagnostics": diag,
        }


@dataclass
class FlowTrace:
    domain: ConvexDomain
    config: FlowConfig
    snapshots: list = field(default_factory=list)
    classification: str = "budget_exhausted"
    status: str = "ok"
    error: str | None = None
    steps: int = 0
    T_est: float | None = None
    T_sigma: float | None = None
    z_est: list | None = None
    phi: ComparisonFunction | None = None
    min_length_increase: float = 0.0

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def lengths(self):
        return np.array([s.L for s in self.snapshots])

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def summary(self) -> dict:
        return {
            "classification": self.classification,
            "status": self.status,
            "error": self.error,
            "steps": self.steps,
            "snapshots": len(self.snapshots),
            "t_final": self.snapshots[-1].t if self.snapshots else None,
            "L_initial": self.snapshots[0].L if self.snapshots else None,
            "L_final": self.snapshots[-1].L if self.snapshots else None,
            "T_est": self.T_est,
            "T_sigma": self.T_sigma,
            "z_est": self.z_est,
            "max_length_increase": self.min_length_increase,
        }

    def write_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            for snap in self.snapshots:
                fh.write(json.dumps(snap.record(), separators=(",", ":")) + "\n")


def _neumann_residual(curve: DiscreteCurve) -> float:
    """Scale-free ``|<grad kappa, N^S> - kappa^S kappa|`` at the endpoints.

    Divided by ``kappa_max^2`` (zero curvature gives zero residual).
    """
    kap = curve.curvature
    slopes = endpoint_curvature_slopes(curve)
    f0, f1 = curve.endpoint_frames
    kmax = float(np.max(np.abs(kap)))
    if kmax == 0.0:
        return 0.0
    r0 = abs(-slopes[0] - f0.curvature * kap[0])
    r1 = abs(slopes[1] - f1.curvature * kap[-1])
    return max(r0, r1) / kmax**2


def _make_snapshot(t, nstep, curve: DiscreteCurve, travel, config: FlowConfig, phi, remeshed):
    summ = total_curvature(curve)
    orth = max(curve.orthogonality_residuals())
    snap = Snapshot(
        t=t,
        step=nstep,
        curve=curve,
        L=curve.length,
        l2=summ.l2,
        K=summ.total,
        travel=travel,
        kappa_max=summ.max_abs,
        inflection_count=summ.inflection_count,
        vertex_count=summ.vertex_count,
        h_min=curve.h_min,
        h_max=curve.h_max,
        orthogonality=orth,
        neumann_residual=_neumann_residual(curve),
        remeshed=remeshed,
    )
    if phi is not None or config.record_profiles:
        table = pair_table(curve, config.profile_vertices)
        off = table.off_diagonal
        L2 = table.doubled_length
        sines = L2 * np.sin(np.pi * table.ell[off] / L2)
        snap.sine_ratio = float(np.min(table.d[off] / sines))
        if phi is not None:
            snap.min_Z = float(np.min(table.z_values(phi)[off]))
        if config.record_profiles:
            from .chord_arc import extended_profile

            rep = extended_profile(curve, config.profile_bins, table=table)
            snap.profile = {"delta": rep.delta.tolist(), "psi": rep.psi.tolist(), "branch": rep.branch}
    return snap


def run(curve: DiscreteCurve, config: FlowConfig | None = None, phi: ComparisonFunction | None = None,
        on_snapshot=None) -> FlowTrace:
    """Integrate until a stop condition and classify the outcome."""
    config = config or FlowConfig()
    stop = config.stop
    if config.target_edge_count and config.target_edge_count != curve.n_edges:
        curve = remesh(curve, config.target_edge_count)
    trace = FlowTrace(curve.domain, config, phi=phi)
    st = _Stepper(curve, config.tol_orth)
    L0 = curve.length
    t, nstep, travel = 0.0, 0, 0.0
    bounded = not isinstance(curve.domain, HalfPlane)
    remeshed = False

    def publish(c, remeshed_flag):
        snap = _make_snapshot(t, nstep, c, travel, config, phi, remeshed_flag)
        trace.snapshots.append(snap)
        if on_snapshot is not None:
            on_snapshot(snap)
        return snap

    last = publish(curve, False)
    next_out = config.output_interval
    pending_rate = last
    L_prev = last.L
    while True:
        if stop.max_steps is not None and nstep >= stop.max_steps:
            break
        if stop.time_at is not None and t >= stop.time_at * (1 - 1e-14):
            break
        if stop.length_below is not None and L_prev < stop.length_below:
            trace.classification = "extinction_suspected"
            break
        if last.kappa_max * last.L < 1e-4 and last.orthogonality <= config.tol_orth:
            trace.classification = "chord_converged"
            break
        if stop.min_Z_negative and last.min_Z is not None and last.min_Z < 0.0:
            break
        hmin = st.h_min()
        if hmin < 1e-6 * L0 or L_prev < 50.0 * EPS * L0:
            trace.classification = "extinction_suspected"
            break
        dt = config.dt_safety * hmin * hmin
        target = next_out
        if stop.time_at is not None:
            target = min(target, stop.time_at)
        landing = t + dt >= target - 1e-12 * max(1.0, target)
        if landing:
            dt = target - t
        ok = False
        for attempt in range(config.max_retries + 1):
            try:
                V, s, frames, move = st.propose(dt)
                old_frames = st.frames
                st.accept(V, s, frames, move)
                ok = True
                break
            except GeometryError as exc:
                err = str(exc)
                dt *= 0.5
                landing = False
        if not ok:
            trace.status = "singularity_suspected"
            trace.error = f"step rejected {config.max_retries + 1} times: {err}"
            trace.classification = "extinction_suspected"
            break
        if bounded:
            for g_old, g_new in zip(old_frames, st.frames):
                a0 = math.atan2(g_old.outward_normal[1], g_old.outward_normal[0])
                a1 = math.atan2(g_new.outward_normal[1], g_new.outward_normal[0])
                travel += abs(math.remainder(a1 - a0, 2.0 * math.pi))
        t = target if landing else t + dt
        nstep += 1
        E = np.diff(st.V, axis=0)
        L_new = float(np.sum(np.sqrt(E[:, 0] ** 2 + E[:, 1] ** 2)))
        if pending_rate is not None:
            pending_rate.dLdt = (L_new - pending_rate.L) / dt
            pending_rate = None
        trace.min_length_increase = max(trace.min_length_increase, (L_new - L_prev) / L_prev)
        L_prev = L_new
        if config.remesh_every and nstep % config.remesh_every == 0:
            try:
                st = _Stepper(remesh(st.curve(), config.target_edge_count), config.tol_orth)
                E = np.diff(st.V, axis=0)
                L_prev = float(np.sum(np.sqrt(E[:, 0] ** 2 + E[:, 1] ** 2)))
                remeshed = True
            except (GeometryError, MeshError) as exc:
                log.warning("remesh skipped at step %d: %s", nstep, exc)
        out_due = landing and target == next_out
        if out_due or L_prev < SHRINK_SNAPSHOT_RATIO * last.L:
            try:
                last = publish(st.curve(), remeshed)
            except (GeometryError, MeshError) as exc:
                trace.status = "singularity_suspected"
                trace.error = f"snapshot failed: {exc}"
                trace.classification = "extinction_suspected"
                break
            remeshed = False
            pending_rate = last
            if out_due:
                next_out = next_out + config.output_interval
    trace.steps = nstep
    _finalize(trace)
    return trace


def _finalize(trace: FlowTrace) -> None:
    snaps = trace.snapshots
    P_final = snaps[-1].travel
    for s in snaps:
        s.K_tilde = P_final - s.travel
    if trace.classification == "extinction_suspected":
        try:
            T, sigma, z = extinction_estimate(trace)
        except EstimationError as exc:
            log.info("no extinction estimate: %s", exc)
            return
        trace.T_est, trace.T_sigma, trace.z_est = T, sigma, [float(z[0]), float(z[1])]
        for s in snaps:
            if s.t < T:
                s.type_one = s.kappa_max**2 * (T - s.t)


def total_curvature_rate(curve: DiscreteCurve) -> tuple[float, float]:
    """Predicted ``dK/dt`` split as ``(boundary_term, inflection_term)``.

    ``dK/dt = sum_ends |kappa| kappa^S - 2 sum_inflections |kappa_s|``; the
    inflection slopes come from the two vertices bracketing each sign change.
    """
    k = curve.curvature
    bnd = sum(abs(float(k[i])) * f.curvature for i, f in zip((0, -1), curve.endpoint_frames))
    ki = k[1:-1]
    s = curve.cumulative_arclength[1:-1]
    floor = max(1e-8 * float(np.max(np.abs(ki))), 1e-10 / curve.length)
    big = np.abs(ki) > floor
    cross = (ki[:-1] * ki[1:] < 0) & (big[:-1] | big[1:])
    slopes = np.abs(np.diff(ki) / np.diff(s))[cross]
    return float(bnd), float(np.sum(slopes))


# -- extinction analysis ---------------------------------------------------------


def extinction_estimate(trace: FlowTrace, window: float = 0.2, min_points: int = 10):
    """``(T_est, sigma_T, z_est)`` from a linear fit of ``L^2`` against ``t``.

    The fit uses the final ``window`` fraction of snapshots. ``z_est`` is the
    midpoint of the last endpoints projected to the boundary.
    """
    if trace.classification != "extinction_suspected":
        raise EstimationError(f"extinction estimate needs an extinction run, got {trace.classification}")
    snaps = trace.snapshots
    m = max(min_points, int(math.ceil(window * len(snaps))))
    if len(snaps) < min_points:
        raise EstimationError(f"only {len(snaps)} snapshots; at least {min_points} needed")
    tail = snaps[-m:]
    t = np.array([s.t for s in tail])
    L2 = np.array([s.L for s in tail]) ** 2
    coef, cov = np.polyfit(t, L2, 1, cov=True)
    slope, icpt = coef
    if not slope < 0:
        raise EstimationError("length is not decreasing in the fit window")
    T = -icpt / slope
    grad = np.array([icpt / slope**2, -1.0 / slope])
    sigma = float(math.sqrt(max(0.0, grad @ cov @ grad)))
    c = snaps[-1].curve
    mid = 0.5 * (c.vertices[0] + c.vertices[-1])
    s_mid = c.domain.project(mid[None, :])[0][0]
    z = c.domain.frame(float(s_mid)).point
    return float(T), sigma, z


@dataclass
class Rescaled:
    vertices: np.ndarray
    hausdorff: float
    factor: float


def _densify(P, n=4000):
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    c = np.concatenate([[0.0], np.cumsum(seg)])
    u = np.linspace(0.0, c[-1], n)
    return np.column_stack([np.interp(u, c, P[:, 0]), np.interp(u, c, P[:, 1])])


def hausdorff(A, B, n: int = 4000) -> float:
    """Hausdorff distance between two polylines (densified to ``n`` points)."""
    a, b = _densify(np.asarray(A, float), n), _densify(np.asarray(B, float), n)
    return float(max(cKDTree(b).query(a)[0].max(), cKDTree(a).query(b)[0].max()))


def rescale(curve: DiscreteCurve, z, T: float, t: float) -> Rescaled:
    """``(Gamma - z) / sqrt(2 (T - t))`` and its distance to the unit half-circle in the tangent half-plane."""
    if not t < T:
        raise ValueError(f"rescaling needs t < T (t={t}, T={T})")
    z = np.asarray(z, float)
    lam = 1.0 / math.sqrt(2.0 * (T - t))
    V = (curve.vertices - z) * lam
    s = curve.domain.project(z[None, :])[0][0]
    f = curve.domain.frame(float(s))
    a = np.linspace(0.0, math.pi, 2001)
    semi = np.cos(a)[:, None] * f.tangent + np.sin(a)[:, None] * (-f.outward_normal)
    return Rescaled(V, hausdorff(V, semi), lam)


def fit_critical_chord(curve: DiscreteCurve):
    """Segment meeting the boundary orthogonally at both ends, seeded at the curve's endpoints.

    Returns ``(p0, p1)`` or ``None`` when the domain has no critical chord.
    """
    dom = curve.domain
    if isinstance(dom, HalfPlane):
        return None

    def resid(s):
        p0, p1 = dom.points(np.array([s[0], s[1]]))
        n = dom._eval(np.array([s[0], s[1]]))[2]
        e = p1 - p0
        return [e[0] * n[0, 1] - e[1] * n[0, 0], e[0] * n[1, 1] - e[1] * n[1, 0]]

    s0 = np.array(curve.endpoint_params, dtype=float)
    if dom.bounded and s0[1] < s0[0]:
        s0[1] += dom.boundary_length
    sol = least_squares(resid, s0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    p = dom.points(sol.x)
    return p[0], p[1]
