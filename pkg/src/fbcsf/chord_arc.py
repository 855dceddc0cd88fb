"""Chord-arc profiles on the formal double and the two-point function ``Z``.

Pairs on the double are ``(i, sign)``. Same-sign pairs use arclength and
chordlength; opposite-sign pairs use reflected arclength and the reflected
(single-bounce) distance. ``Z = d - L2 * phi(l / L2)`` with ``L2 = 2 L``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .billiard import reflected_distance, reflected_distance_batch
from .curve import DiscreteCurve, DoubledCurve
from .domain import angle_reconstruction_residual, angles_at, rot90

__all__ = [
    "ConfigError",
    "ComparisonFunction",
    "barrier",
    "scaled_sine",
    "tabulated",
    "custom",
    "phi_from_spec",
    "tune_to_touch",
    "PairTable",
    "pair_table",
    "ProfileReport",
    "extended_profile",
    "evaluate_Z",
    "ConditionRecord",
    "check_minimum_conditions",
]

ADMISSIBILITY_SAMPLES = 10_000


class ConfigError(ValueError):
    """Invalid user-supplied parameters (exit status 2 at the CLI)."""


# -- comparison functions ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ComparisonFunction:
    """Comparison modulus ``phi`` on ``[0, 1]`` with its first two derivatives."""

    kind: str
    params: dict
    f: Callable = field(repr=False)
    df: Callable = field(repr=False)
    ddf: Callable = field(repr=False)

    def __call__(self, zeta):
        return self.f(np.asarray(zeta, dtype=float))

    def d1(self, zeta):
        return self.df(np.asarray(zeta, dtype=float))

    def d2(self, zeta):
        return self.ddf(np.asarray(zeta, dtype=float))

    def scaled(self, k: float) -> "ComparisonFunction":
        f, df, ddf = self.f, self.df, self.ddf
        params = dict(self.params, scale=k * self.params.get("scale", 1.0))
        out = ComparisonFunction(self.kind, params, lambda z: k * f(z), lambda z: k * df(z), lambda z: k * ddf(z))
        return out.validated()

    def admissibility(self, n: int = ADMISSIBILITY_SAMPLES) -> dict:
        """Sampled residuals of symmetry, slope bound, concavity and the half-interval lemma."""
        z = np.linspace(0.0, 1.0, n)
        inner = z[1:-1]
        half = z[(z > 0.0) & (z < 0.5)]
        f = self(z)
        scale = max(1.0, float(np.max(np.abs(f))))
        return {
            "symmetry": float(np.max(np.abs(self(1.0 - z) - f))) / scale,
            "max_abs_slope": float(np.max(np.abs(self.d1(z)))),
            "max_second_derivative": float(np.max(self.d2(inner))),
            "min_slope_left_half": float(np.min(self.d1(half))),
            "min_phi_minus_zeta_slope": float(np.min(self(half) - half * self.d1(half))),
        }

    def validated(self) -> "ComparisonFunction":
        a = self.admissibility()
        problems = []
        if a["symmetry"] > 1e-8:
            problems.append(f"not symmetric about 1/2 (residual {a['symmetry']:.2e})")
        if not a["max_abs_slope"] < 1.0:
            problems.append(f"|phi'| reaches {a['max_abs_slope']:.4f} >= 1")
        if not a["max_second_derivative"] < 0.0:
            problems.append("not strictly concave")
        if not a["min_slope_left_half"] > 0.0 or not a["min_phi_minus_zeta_slope"] > 0.0:
            problems.append("phi' > 0 and phi - zeta phi' > 0 fail on (0, 1/2)")
        if problems:
            raise ConfigError(f"inadmissible comparison function {self.kind}: " + "; ".join(problems))
        return self

    def to_json(self) -> dict:
        return {"kind": self.kind, **{k: v for k, v in self.params.items() if not callable(v)}}


def barrier(c: float, eps: float) -> ComparisonFunction:
    """``c (sin((pi - eps) zeta + eps/2) - sin(eps/2))`` for ``c < 1/100``, ``eps < 1/10``."""
    if not 0.0 < c < 0.01:
        raise ConfigError(f"barrier c={c} outside (0, 1/100)")
    if not 0.0 < eps < 0.1:
        raise ConfigError(f"barrier eps={eps} outside (0, 1/10)")
    w, off, base = math.pi - eps, eps / 2, math.sin(eps / 2)
    return ComparisonFunction(
        "barrier",
        {"c": c, "eps": eps},
        lambda z: c * (np.sin(w * z + off) - base),
        lambda z: c * w * np.cos(w * z + off),
        lambda z: -c * w * w * np.sin(w * z + off),
    ).validated()


def scaled_sine(c: float, tau: float = 0.0) -> ComparisonFunction:
    """``c exp(-4 pi^2 tau) sin(pi zeta)``."""
    if not c > 0.0:
        raise ConfigError(f"scaled_sine c={c} must be positive")
    a = c * math.exp(-4.0 * math.pi**2 * tau)
    return ComparisonFunction(
        "scaled_sine",
        {"c": c, "tau": tau},
        lambda z: a * np.sin(math.pi * z),
        lambda z: a * math.pi * np.cos(math.pi * z),
        lambda z: -a * math.pi**2 * np.sin(math.pi * z),
    ).validated()


def tabulated(values) -> ComparisonFunction:
    """Cubic interpolant of samples on a uniform grid over ``[0, 1]``."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 5:
        raise ConfigError("tabulated phi needs at least 5 samples")
    sp = CubicSpline(np.linspace(0.0, 1.0, len(values)), values)
    d1, d2 = sp.derivative(1), sp.derivative(2)
    return ComparisonFunction("tabulated", {"values": values.tolist()}, sp, d1, d2).validated()


def custom(f, df, ddf, name: str = "custom") -> ComparisonFunction:
    return ComparisonFunction(name, {}, f, df, ddf).validated()


def phi_from_spec(spec: dict | None) -> ComparisonFunction | None:
    if spec is None:
        return None
    kind = spec.get("kind")
    if kind == "barrier":
        return barrier(float(spec["c"]), float(spec["eps"]))
    if kind == "scaled_sine":
        return scaled_sine(float(spec["c"]), float(spec.get("tau", 0.0)))
    if kind == "tabulated":
        return tabulated(spec["values"])
    raise ConfigError(f"unknown phi kind {kind!r}")


def tune_to_touch(curve, shape: ComparisonFunction, subsample: int | None = None,
                  table: "PairTable | None" = None) -> tuple[ComparisonFunction, float]:
    """Scale ``shape`` so that the off-diagonal minimum of ``Z`` is exactly zero.

    Returns the scaled function and the factor
    ``min d / (L2 * shape(l / L2))`` over off-diagonal pairs.
    """
    if table is None:
        table = pair_table(curve, subsample)
    off = table.off_diagonal
    L2 = table.doubled_length
    den = L2 * shape(table.ell[off] / L2)
    ok = den > 0
    k = float(np.min(table.d[off][ok] / den[ok]))
    return shape.scaled(k), k


# -- pair enumeration ----------------------------------------------------------------


@dataclass(frozen=True)
class PairTable:
    """All unordered pairs on the double of a (possibly subsampled) curve.

    ``i``/``j`` index the base curve's vertices; ``same`` marks same-sign
    pairs. Opposite-sign pairs are listed only for interior vertices since
    an endpoint is its own mirror. ``bounce`` is NaN for same-sign pairs.
    """

    i: np.ndarray
    j: np.ndarray
    same: np.ndarray
    ell: np.ndarray
    d: np.ndarray
    bounce: np.ndarray
    doubled_length: float
    h: float
    n_vertices: int

    @property
    def off_diagonal(self):
        return ~(self.same & (self.i == self.j))

    def z_values(self, phi: ComparisonFunction):
        L2 = self.doubled_length
        return self.d - L2 * phi(self.ell / L2)


def _indices(n_vertices: int, subsample: int | None):
    if subsample is None or subsample >= n_vertices - 1:
        return np.arange(n_vertices)
    return np.unique(np.rint(np.linspace(0, n_vertices - 1, subsample + 1)).astype(int))


def pair_table(curve, subsample: int | None = None, include_diagonal: bool = True) -> PairTable:
    base = curve.base if isinstance(curve, DoubledCurve) else curve
    idx = _indices(len(base.vertices), subsample)
    c = base.cumulative_arclength
    v = base.vertices
    L = base.length
    n = len(base.vertices) - 1

    a, b = np.triu_indices(len(idx), 0 if include_diagonal else 1)
    si, sj = idx[a], idx[b]
    ell_s = np.abs(c[sj] - c[si])
    d_s = np.hypot(*(v[sj] - v[si]).T)

    inner = idx[(idx > 0) & (idx < n)]
    a, b = np.triu_indices(len(inner), 0)
    ri, rj = inner[a], inner[b]
    via = c[ri] + c[rj]
    ell_r = np.minimum(via, 2.0 * L - via)
    if len(ri):
        res = reflected_distance_batch(base.domain, v[ri], v[rj], check=False)
        d_r, s_r = res["distance"], res["s"]
    else:
        d_r = s_r = np.empty(0)
    h = base.h_max if subsample is None else float(np.max(np.diff(c[idx])))
    return PairTable(
        i=np.concatenate([si, ri]),
        j=np.concatenate([sj, rj]),
        same=np.concatenate([np.ones(len(si), bool), np.zeros(len(ri), bool)]),
        ell=np.concatenate([ell_s, ell_r]),
        d=np.concatenate([d_s, d_r]),
        bounce=np.concatenate([np.full(len(si), np.nan), s_r]),
        doubled_length=2.0 * L,
        h=h,
        n_vertices=len(idx),
    )


# -- profiles ----------------------------------------------------------------------


@dataclass
class ProfileReport:
    bin_edges: np.ndarray
    delta: np.ndarray
    psi: np.ndarray
    branch: list
    doubled_length: float
    h: float
    min_Z: float | None = None
    argmin: tuple | None = None
    argmin_ell: float | None = None
    argmin_d: float | None = None
    angle_check: dict | None = None
    snell_data: object = None
    phi: ComparisonFunction | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "psi", "branch"])
            for dl, ps, br in zip(self.delta, self.psi, self.branch):
                if np.isfinite(ps):
                    w.writerow([repr(float(dl)), repr(float(ps)), br])

    def to_json(self) -> dict:
        out = {
            "doubled_length": self.doubled_length,
            "h": self.h,
            "n_bins": len(self.psi),
            "filled_bins": int(np.count_nonzero(np.isfinite(self.psi))),
            "min_Z": self.min_Z,
            "argmin": [list(p) for p in self.argmin] if self.argmin else None,
            "argmin_ell": self.argmin_ell,
            "argmin_d": self.argmin_d,
            "angle_check": self.angle_check,
        }
        if self.phi is not None:
            out["phi"] = self.phi.to_json()
        if self.snell_data is not None:
            sd = self.snell_data
            out["snell"] = {"distance": sd.distance, "bounce_s": sd.bounce.s, "residual": sd.snell_residual,
                            "multiple": sd.multiple}
        return out


def _pick_argmin(table: PairTable, z, n_edges: int):
    off = table.off_diagonal
    zmin = float(np.min(z[off]))
    L2 = table.doubled_length
    cand = np.flatnonzero(off & (z <= zmin + 1e-12 * L2))
    endpoint = (table.i[cand] == 0) | (table.j[cand] == n_edges) | (table.i[cand] == n_edges) | (table.j[cand] == 0)
    crossover = np.abs(table.ell[cand] - 0.5 * L2) <= table.h
    # ties: prefer interior pairs away from the crossover, then smaller Z, then same-sign
    key = np.lexsort((table.j[cand], table.i[cand], ~table.same[cand], z[cand], crossover, endpoint))
    return int(cand[key[0]]), zmin


def extended_profile(curve, n_bins: int = 64, phi: ComparisonFunction | None = None,
                     subsample: int | None = None, table: PairTable | None = None) -> ProfileReport:
    """Bin-wise minimum of ``d`` over ``l`` on ``[0, L2/2]`` for all pairs on the double."""
    base = curve.base if isinstance(curve, DoubledCurve) else curve
    if len(base.vertices) < 8:
        raise ValueError("profile needs at least 8 vertices")
    if n_bins < 16:
        raise ValueError("profile needs at least 16 bins")
    if table is None:
        table = pair_table(base, subsample)
    L2 = table.doubled_length
    edges = np.linspace(0.0, 0.5 * L2, n_bins + 1)
    k = np.minimum((table.ell / (0.5 * L2) * n_bins).astype(int), n_bins - 1)
    order = np.lexsort((table.ell, table.d, k))
    ks = k[order]
    first = order[np.r_[True, ks[1:] != ks[:-1]]]
    psi = np.full(n_bins, np.inf)
    delta = 0.5 * (edges[:-1] + edges[1:])
    branch = [""] * n_bins
    psi[k[first]] = table.d[first]
    delta[k[first]] = table.ell[first]
    for kk, idx in zip(k[first], first):
        branch[kk] = "classical" if table.same[idx] else "reflected"
    report = ProfileReport(edges, delta, psi, branch, L2, table.h, phi=phi)
    if phi is not None:
        z = table.z_values(phi)
        best, zmin = _pick_argmin(table, z, base.n_edges)
        i, j, same = int(table.i[best]), int(table.j[best]), bool(table.same[best])
        report.min_Z = zmin
        report.argmin = ((i, 1), (j, 1 if same else -1))
        report.argmin_ell = float(table.ell[best])
        report.argmin_d = float(table.d[best])
        report.angle_check, report.snell_data = _angles_at_pair(base, i, j, same)
    return report


def _angles_at_pair(base: DiscreteCurve, i, j, same):
    from .billiard import distance_first_second_variations
    from .domain import DegenerateConfigurationError

    v, t = base.vertices, base.unit_tangents
    out = {}
    if i != j:
        var = distance_first_second_variations(v[i], v[j], t[i], t[j])
        out.update(alpha_x=var.alpha_x, alpha_y=var.alpha_y)
    snell = None
    if not same:
        snell = reflected_distance(base.domain, v[i], v[j])
        try:
            ang = angles_at(base.domain, v[i], v[j], snell.bounce, t[i], t[j]) if i != j else None
        except DegenerateConfigurationError:
            ang = None
        if ang is not None:
            out.update(ang.as_dict())
            out["reconstruction_residual"] = angle_reconstruction_residual(ang, v[i], v[j], snell.bounce, t[i], t[j])
        else:
            out.update(theta_x=snell.theta_x, theta_y=snell.theta_y)
        out["snell_residual"] = snell.snell_residual
    return out, snell


def evaluate_Z(curve, phi: ComparisonFunction, x, y) -> float:
    """``Z`` at a pair of signed indices ``x = (i, sign)``, ``y = (j, sign)``."""
    dc = curve if isinstance(curve, DoubledCurve) else DoubledCurve(curve)
    (i, si), (j, sj) = x, y
    ell = dc.ell(i, si, j, sj)
    L2 = dc.doubled_length
    return float(dc.d(i, si, j, sj) - L2 * phi(ell / L2))


# -- conditions at a zero minimum ------------------------------------------------------


@dataclass
class ConditionRecord:
    case: str
    passed: bool | None
    residuals: dict
    tolerance: float
    inequality_tolerance: float
    h: float
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "pass": self.passed,
            "residuals": self.residuals,
            "tolerance": self.tolerance,
            "inequality_tolerance": self.inequality_tolerance,
            "h": self.h,
            "reason": self.reason,
        }


def _wrap(a):
    return abs(math.remainder(a, 2.0 * math.pi))


def check_minimum_conditions(curve, phi: ComparisonFunction, report: ProfileReport, pair=None,
                             tol_factor: float = 10.0) -> ConditionRecord:
    """Evaluate the first- and second-order conditions at a zero minimum of ``Z``.

    Angle identities must hold within ``tol_factor * h`` radians; the
    second-variation inequalities within ``tol_factor * h * (kmax + 1/L)^2``.
    ``pair`` overrides the report's argmin (any pair with ``Z`` near zero).
    """
    base = curve.base if isinstance(curve, DoubledCurve) else curve
    h = base.h_max
    kmax = float(np.max(np.abs(base.curvature)))
    tol = tol_factor * h
    tol_ineq = tol_factor * h * (kmax + 1.0 / base.length) ** 2
    L2 = 2.0 * base.length

    def record(case, passed, res, reason=""):
        res = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in res.items()}
        passed = None if passed is None else bool(passed)
        return ConditionRecord(case, passed, res, tol, tol_ineq, h, reason)

    if report.min_Z is None or report.argmin is None:
        return record("inconclusive", None, {}, "no comparison function evaluated")
    (i, si), (j, sj) = pair if pair is not None else report.argmin
    z_here = evaluate_Z(base, phi, (i, si), (j, sj))
    res = {"Z": z_here, "min_Z": report.min_Z}
    if abs(report.min_Z) > 1e-6 * L2 or abs(z_here) > 1e-6 * L2:
        return record("inconclusive", None, res, "minimum of Z is not zero")
    if i == j and si == sj:
        return record("inconclusive", None, res, "minimum on the diagonal")
    n = base.n_edges
    same = si == sj or i in (0, n) or j in (0, n)
    dc = DoubledCurve(base)
    ell = dc.ell(i, si, j, sj)
    zeta = ell / L2
    if abs(ell - 0.5 * L2) <= h:
        res["ell_over_L"] = zeta
        return record("crossover", None, res, "minimum at the crossover l = L/2; derivative check skipped")
    v, t, kap = base.vertices, base.unit_tangents, base.curvature
    d1, d2 = float(phi.d1(zeta)), float(phi.d2(zeta))

    if same:
        from .billiard import distance_first_second_variations

        var = distance_first_second_variations(v[i], v[j], t[i], t[j])
        c = base.cumulative_arclength
        sgn = 1.0 if c[j] >= c[i] else -1.0
        # moving x forward shortens l when x precedes y
        dzx = var.dx + d1 * sgn
        dzy = var.dy - d1 * sgn
        res.update(alpha_x=var.alpha_x, alpha_y=var.alpha_y, dZ_dx=dzx, dZ_dy=dzy)
        if i in (0, n) or j in (0, n):
            ok = abs(dzx) <= tol and abs(dzy) <= tol
            return record("endpoint", ok, res)
        ident = _wrap(var.alpha_x + var.alpha_y - math.pi)
        ineq = -4.0 * d2 / L2 - kap[i] * math.cos(var.alpha_x) + kap[j] * math.cos(var.alpha_y)
        res.update(alpha_sum_residual=ident, second_variation=ineq)
        return record("a", ident <= tol and ineq >= -tol_ineq, res)

    snell = reflected_distance(base.domain, v[i], v[j])
    z = snell.bounce
    if i != j:
        ang = angles_at(base.domain, v[i], v[j], z, t[i], t[j]).as_dict()
    else:
        # a point paired with its own mirror copy: only the bounce angles exist
        u = (v[i] - z.point) / snell.d_x
        th = math.atan2(float(u @ z.tangent), float(u @ z.outward_normal))
        be = math.atan2(float(u @ t[i]), float(u @ -rot90(t[i])))
        ang = {"beta_x": be, "beta_y": be, "theta_x": th, "theta_y": -th}
    dx, dy = snell.d_x, snell.d_y
    inv = 1.0 / dx + 1.0 / dy
    theta = ang["theta_x"]
    beta = ang["beta_x"]
    sign_term = inv * math.cos(theta) + 2.0 * z.curvature
    if sign_term < 0.0:
        bend = inv * 2.0 * z.curvature / sign_term * (1.0 - d1 * d1)
    else:
        bend = math.nan
    ineq = -kap[i] * math.cos(beta) - kap[j] * math.cos(beta) + bend - 4.0 * d2 / L2
    res.update(
        ang,
        beta_residual=_wrap(ang["beta_x"] - ang["beta_y"]),
        theta_residual=_wrap(ang["theta_x"] + ang["theta_y"]),
        sign_term=sign_term,
        second_variation=ineq,
        d_x=dx,
        d_y=dy,
        bounce_curvature=z.curvature,
        multiple_bounce=snell.multiple,
    )
    ok = (
        res["beta_residual"] <= tol
        and res["theta_residual"] <= tol
        and sign_term < 0.0
        and ineq >= -tol_ineq
    )
    return record("b", ok, res)
