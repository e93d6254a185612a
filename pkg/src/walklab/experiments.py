"""Named experiments, their configuration and report emission."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np

from . import report as rpt
from .engine import WalkConfig, ak_level, ak_schedule, reference_walk, run_ensemble, run_trajectory, tail_statistic
from .green import crosscheck_power, exact_power, green_from_report, green_truncated_exact, ratio_series
from .groups import (
    GroupError,
    Lattice,
    LatticeElement,
    Polycyclic,
    PolycyclicElement,
    Wreath,
    descriptor_to_dict,
    identity,
    multiply,
    sol,
    wreath_element,
)
from .measures import (
    Measure,
    convolve,
    eta,
    lambda_move,
    lamplighter_mu,
    lamplighter_nu,
    polycyclic_mu,
    polycyclic_nu,
    srw_lattice,
    validate,
)
from .observables import EPS_MAX, PolycyclicS, WreathS, compute_eigendata, log_abs_ip, v1_high_precision
from .svg import emit_svg

EXPERIMENTS = (
    "validate",
    "maxineq",
    "wreath-instability",
    "polycyclic-instability",
    "oracle-crosscheck",
    "lattice-sanity",
    "green",
)

# thresholds of the instability pattern
ZERO_TAIL_SHARE = 0.95
TAIL_RATIO_MIN = 0.5
GREEN_RATIO_MIN = 10.0
RATIO_TREND_FROM = 10**4
AK_MIN_REACHED = 100
SIGMAS = 4.0
Z3_GREEN = (1.52, 0.05)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    name: str = "validate"
    group: str | None = None
    matrices: list | None = None
    measure: list | None = None
    epsilon: float = 0.2
    big_c: list = field(default_factory=lambda: [2.0, 4.0, 8.0])
    beta: list = field(default_factory=lambda: [2, 4, 8])
    jump: int = 8
    steps: int = 100_000
    trajectories: int = 100
    seed: int = 0
    threads: int = 1
    windows: int = 20
    horizons: list | None = None
    alphas: int = 8
    oracle_n: int = 6
    oracle_walks: int = 1_000_000
    increment_steps: int = 2000
    increment_trajectories: int = 4
    out: str | None = None
    formats: list = field(default_factory=lambda: ["csv", "json"])

    # settings that never change results and stay out of the hash
    UNHASHED = ("threads", "out", "formats")

    def resolved_group(self):
        if self.group:
            return self.group
        if self.matrices:
            return "polycyclic"
        if self.name == "polycyclic-instability":
            return "sol"
        if self.name == "lattice-sanity":
            return "z3"
        return "z2wrz"

    def resolved(self):
        doc = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in self.UNHASHED}
        doc["group"] = self.resolved_group()
        return doc

    def hash(self):
        return rpt.spec_hash(self.resolved())


_KEYS = {f.name for f in fields(ExperimentSpec)}


def _as_list(value, cast):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    return [cast(v) for v in value]


def _as_int(v):
    f = float(v)
    if f != int(f):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(f)


def _check_spec(spec):
    if spec.name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {spec.name!r}; choose from {', '.join(EXPERIMENTS)}")
    if not 0 < spec.epsilon < EPS_MAX:
        raise ConfigError(f"epsilon must lie in the open interval (0, {EPS_MAX}), got {spec.epsilon}")
    if not spec.big_c or any(not c > 0 for c in spec.big_c):
        raise ConfigError(f"C must be > 0, got {spec.big_c}")
    if not spec.beta or any(b < 1 for b in spec.beta):
        raise ConfigError(f"beta must be an integer >= 1, got {spec.beta}")
    for key in ("steps", "trajectories", "threads", "windows", "jump", "alphas", "oracle_walks",
                "increment_trajectories"):
        if getattr(spec, key) < 1:
            raise ConfigError(f"{key} must be >= 1, got {getattr(spec, key)}")
    for key in ("oracle_n", "increment_steps"):
        if getattr(spec, key) < 0:
            raise ConfigError(f"{key} must be >= 0")
    if not 0 <= spec.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if spec.horizons is not None:
        if any(h < 0 or h > spec.steps for h in spec.horizons):
            raise ConfigError(f"horizons must lie in [0, steps={spec.steps}]")
    bad = set(spec.formats) - {"csv", "json", "svg"}
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}; use csv, json, svg")


_CASTS = {
    "name": str,
    "group": lambda v: None if v is None else str(v),
    "epsilon": float,
    "big_c": lambda v: _as_list(v, float),
    "beta": lambda v: _as_list(v, _as_int),
    "horizons": lambda v: None if v is None else sorted(set(_as_list(v, _as_int))),
    "formats": lambda v: _as_list(v, lambda s: str(s).strip().lower()),
    "out": lambda v: None if v is None else str(v),
    "matrices": lambda v: v,
    "measure": lambda v: v,
}


def parse_config(path=None, overrides=None):
    """Resolve an ExperimentSpec from an optional JSON file plus flag overrides.

    Flags win over file values; ``None`` overrides are ignored.  Unknown keys
    and out-of-range values raise ConfigError.
    """
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for k, v in raw.items():
        try:
            kwargs[k] = _CASTS.get(k, _as_int)(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from None
    spec = ExperimentSpec(**kwargs)
    _check_spec(spec)
    return spec


# ---------------------------------------------------------------------------
# groups and measures named in an ExperimentSpec


_WREATH = re.compile(r"z(\d+|z)wrz(\d*)")


def parse_group(name, matrices=None):
    s = name.lower().replace(" ", "").replace("_", "")
    if s == "sol":
        return sol()
    if s == "sol2":
        a = ((2, 1), (1, 1))
        return Polycyclic((a, ((5, 3), (3, 2))))
    if s == "polycyclic":
        if not matrices:
            raise ConfigError("group 'polycyclic' needs 'matrices'")
        return Polycyclic(tuple(tuple(tuple(r) for r in m) for m in matrices))
    if s == "lamplighter":
        return Wreath(1, 2)
    m = _WREATH.fullmatch(s)
    if m:
        q = None if m.group(1) == "z" else int(m.group(1))
        return Wreath(int(m.group(2) or 1), q)
    m = re.fullmatch(r"z(\d+)", s)
    if m:
        return Lattice(int(m.group(1)))
    raise ConfigError(f"unknown group {name!r}; try z2wrz, z3wrz2, zzwrz, sol, sol2, polycyclic, z1, z2, z3")


def element_from_json(desc, obj):
    if desc.family == "lattice":
        return LatticeElement(tuple(int(v) for v in obj))
    if desc.family == "wreath":
        lamps = {}
        for entry in obj.get("lamps", []):
            *site, value = entry
            lamps[tuple(int(s) for s in site)] = int(value)
        pos = obj.get("pos", [0] * desc.d)
        return wreath_element(desc, lamps, pos)
    return PolycyclicElement(tuple(int(v) for v in obj["k"]), tuple(int(v) for v in obj["x"]))


def custom_measure(desc, atoms):
    return Measure(desc, [(element_from_json(desc, g), Fraction(str(w))) for g, w in atoms], name="custom")


def builder_measures(spec, desc):
    if desc.family == "wreath":
        return {"mu": lamplighter_mu(desc), f"nu(jump={spec.jump})": lamplighter_nu(desc, spec.jump)}
    if desc.family == "polycyclic":
        out = {"mu": polycyclic_mu(desc)}
        for b in spec.beta:
            out[f"nu(beta={b})"] = polycyclic_nu(desc, b)
        return out
    return {"srw": srw_lattice(desc.d)}


def default_horizons(spec):
    if spec.horizons:
        return list(spec.horizons)
    hs = [10**k for k in range(1, 19) if 10**k < spec.steps]
    return hs + [spec.steps]


# ---------------------------------------------------------------------------
# results


@dataclass
class Check:
    name: str
    passed: bool
    hard: bool
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "hard": self.hard, "detail": self.detail}


@dataclass
class ExperimentResult:
    name: str
    spec_hash: str
    checks: list
    summary: dict
    files: dict
    paths: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.passed for c in self.checks if c.hard)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def run_experiment(spec):
    runner = _RUNNERS[spec.name]
    sink = rpt.OutputSink(
        Path(spec.out) / spec.name if spec.out else None, spec.formats, spec.hash()
    )
    checks, summary = runner(spec, sink)
    doc = {
        "experiment": spec.name,
        "spec": spec.resolved(),
        "checks": [c.to_dict() for c in checks],
        "ok": all(c.passed for c in checks if c.hard),
        "results": summary,
    }
    sink.json("summary", doc)
    paths = sink.write()
    return ExperimentResult(spec.name, sink.hash, checks, summary, dict(sink.files), paths)


def _conservation_check(label, reports):
    ok = all(r.conservation_ok for r in reports)
    return Check(f"{label}: window counts sum to total visits", ok, True)


def _ensemble(spec, desc, mu, preds=(), targets=(), horizons=None, schedule=()):
    cfg = WalkConfig(
        desc, mu, spec.steps, spec.trajectories, spec.seed,
        predicates=list(preds), targets=list(targets),
        horizons=horizons if horizons is not None else default_horizons(spec),
        ak_schedule=list(schedule), jump=spec.jump, window_count=spec.windows,
    )
    return run_ensemble(cfg, threads=spec.threads)


# ---------------------------------------------------------------------------
# validate


def _validate(spec, sink):
    checks, summary = [], {}
    try:
        desc = parse_group(spec.resolved_group(), spec.matrices)
    except GroupError as exc:
        checks.append(Check("group descriptor", False, True, str(exc)))
        return checks, {"error": str(exc)}
    checks.append(Check("group descriptor", True, True, repr(desc)))
    summary["group"] = descriptor_to_dict(desc)
    if desc.family == "polycyclic":
        try:
            eig = compute_eigendata(desc)
        except GroupError as exc:
            checks.append(Check("eigendata", False, True, str(exc)))
            return checks, summary
        summary["eigendata"] = eig.to_dict()
        summary["growth"] = "exponential" if eig.exponential_growth else "polynomial"
        checks.append(Check("eigendata", True, True, f"lambda_11 = {eig.lambda_11:.6f}"))
        rows = [[i, j, v] for i, row in enumerate(eig.eigenvalues) for j, v in enumerate(row)]
        sink.table("eigenvalues", ["generator", "eigenvector", "eigenvalue"], rows)
    measures = {} if spec.measure else builder_measures(spec, desc)
    if spec.measure:
        try:
            measures["custom"] = custom_measure(desc, spec.measure)
        except (GroupError, KeyError, TypeError, ValueError) as exc:
            checks.append(Check("custom measure", False, True, str(exc)))
            return checks, summary
    rows, reports = [], {}
    for name, mu in measures.items():
        rep = validate(mu)
        reports[name] = rep.to_dict()
        rows.append([name, rep.support, str(rep.total_mass), rep.normalized, rep.symmetric, rep.positive])
        checks.append(Check(f"{name}: normalized", rep.normalized, True, str(rep.total_mass)))
        checks.append(Check(f"{name}: symmetric", rep.symmetric, True, "; ".join(rep.problems)))
        checks.append(Check(f"{name}: positive weights", rep.positive, True))
    summary["measures"] = reports
    sink.table("measures", ["measure", "support", "total_mass", "normalized", "symmetric", "positive"], rows)
    if desc.family == "wreath" and desc.d == 1 and desc.lamp_modulus == 2 and not spec.measure:
        e = eta(desc)
        composed = convolve(convolve(e, lambda_move(desc)), e)
        same = composed == lamplighter_mu(desc) and len(composed) == 8
        checks.append(Check("eta*lambda*eta equals the 8-atom measure", same, True))
    return checks, summary


# ---------------------------------------------------------------------------
# maxineq


def _require_wreath(spec):
    desc = parse_group(spec.resolved_group(), spec.matrices)
    if desc.family != "wreath":
        raise ConfigError(f"{spec.name} needs a lamplighter group, got {spec.resolved_group()}")
    return desc


def _maxineq(spec, sink):
    desc = _require_wreath(spec)
    mu = lamplighter_mu(desc)
    rep = _ensemble(spec, desc, mu, horizons=[spec.steps])
    N = spec.trajectories
    hist = rep.final_gap_hist
    rows, checked = [], []
    for a in range(1, spec.alphas + 1):
        count = sum(c for g, c in hist.items() if g >= a)
        emp = count / N
        theo = 2.0**-a
        sigma = math.sqrt(theo * (1 - theo) / N)
        z = (emp - theo) / sigma
        rows.append([a, count, emp, theo, sigma, z])
        if a <= 6:
            checked.append((a, z))
    sink.table("maxineq", ["alpha", "count", "empirical", "theory", "sigma", "z"], rows)
    worst = max(checked, key=lambda t: abs(t[1]))
    checks = [
        _conservation_check("mu", [rep]),
        Check(
            f"P[M_n - F_R >= alpha] within {SIGMAS:g} sigma of 2^-alpha for alpha = 1..{min(6, spec.alphas)}",
            all(abs(z) <= SIGMAS for _, z in checked), False, f"worst alpha = {worst[0]}, z = {worst[1]:.3f}",
        ),
    ]
    sink.svg("maxineq", emit_svg(
        [("empirical", [(r[0], r[2]) for r in rows]), ("2^-alpha", [(r[0], r[3]) for r in rows])],
        title="P[M_n - F_R >= alpha]", xlabel="alpha", ylabel="probability", log_y=True, comment=sink.hash,
    ))
    summary = {
        "rows": [dict(zip(["alpha", "count", "empirical", "theory", "sigma", "z"], r)) for r in rows],
        "gap_histogram": {str(k): v for k, v in sorted(hist.items())},
        "n": spec.steps,
        "trajectories": N,
    }
    return checks, summary


# ---------------------------------------------------------------------------
# instability pattern


def instability_pattern(rep_mu, rep_nu, label):
    """(a) mu rarely visits late, (b) nu keeps visiting, (c) Green ratio grows."""
    p_mu = rep_mu.labels.index(label)
    zero_share = rep_mu.pred_zero_final_half[p_mu] / rep_mu.n_trajectories
    tail = tail_statistic(rep_nu, label)
    rows = ratio_series(rep_mu, rep_nu, label)
    full = rows[-1]
    g_ratio = full.g_nu / full.g_mu if full.g_mu > 0 else math.inf
    trend = [r for r in rows if r.horizon >= RATIO_TREND_FROM] or rows
    vals = [r.ratio for r in trend]
    decreasing = len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:]))
    a = zero_share >= ZERO_TAIL_SHARE
    b = (not tail.no_visits) and tail.ratio >= TAIL_RATIO_MIN
    c = g_ratio >= GREEN_RATIO_MIN and decreasing
    return {
        "label": label,
        "zero_final_half_share_mu": zero_share,
        "tail_ratio_nu": tail.ratio,
        "green_ratio_nu_over_mu": g_ratio,
        "ratio_trend_horizons": [r.horizon for r in trend],
        "ratio_trend": vals,
        "ratio_decreasing": decreasing,
        "a": a,
        "b": b,
        "c": c,
        "pass": a and b and c,
    }, rows


def ak_rows(rep):
    out = []
    for k, t, reached, succ in zip(rep.ak_k, rep.ak_t, rep.ak_reached, rep.ak_success):
        bound = 4.0**-t
        sigma = math.sqrt(bound * (1 - bound) / reached) if reached else math.nan
        freq = succ / reached if reached else math.nan
        applicable = reached >= AK_MIN_REACHED
        ok = (freq >= bound - SIGMAS * sigma) if applicable else None
        out.append({"k": k, "t_k": t, "level": ak_level(k), "reached": reached, "success": succ,
                    "frequency": freq, "bound": bound, "sigma": sigma, "applicable": applicable, "ok": ok})
    return out


def _window_rows(reports, labels):
    rep0 = reports[0]
    block = rep0.window_block
    rows = []
    for w in range(rep0.window_count):
        start = w * block
        end = rep0.n_steps if w == rep0.window_count - 1 else (w + 1) * block - 1
        row = [w, start, end]
        for rep, lab in zip(reports, labels):
            row.append(rep.pred_window_sums[rep.labels.index(lab)][w])
        rows.append(row)
    return rows


def _wreath_instability(spec, sink):
    desc = _require_wreath(spec)
    S = WreathS(spec.epsilon)
    sched = [k for k in ak_schedule(spec.steps) if k <= 4**10]
    rep_mu = _ensemble(spec, desc, lamplighter_mu(desc), [S], schedule=sched)
    rep_nu = _ensemble(spec, desc, lamplighter_nu(desc, spec.jump), [S], schedule=sched)
    pattern, rows = instability_pattern(rep_mu, rep_nu, S.label)
    ak = ak_rows(rep_nu)
    applicable = [r for r in ak if r["applicable"]]
    checks = [
        _conservation_check("mu and nu", [rep_mu, rep_nu]),
        Check("(a) mu: zero final-half visits in >= 95% of trajectories", pattern["a"], False,
              f"share = {pattern['zero_final_half_share_mu']:.4f}"),
        Check("(b) nu: final-half per-window visits >= 0.5x first half", pattern["b"], False,
              f"ratio = {pattern['tail_ratio_nu']:.4f}"),
        Check("(c) G_nu/G_mu >= 10 at full horizon and G_mu/G_nu decreasing", pattern["c"], False,
              f"G_nu/G_mu = {pattern['green_ratio_nu_over_mu']:.3f}, trend = {pattern['ratio_trend']}"),
        Check(f"A_k frequency >= 4^-t_k - {SIGMAS:g} sigma (k reached by >= {AK_MIN_REACHED})",
              bool(applicable) and all(r["ok"] for r in applicable), False,
              ", ".join(f"k={r['k']}: {r['frequency']:.4f}" for r in applicable) or "no k applicable"),
    ]
    sink.table("windows", ["window", "t_start", "t_end", "visits_mu", "visits_nu"],
               _window_rows([rep_mu, rep_nu], [S.label, S.label]))
    sink.table("green_ratio", ["horizon", "g_mu", "se_mu", "g_nu", "se_nu", "ratio_mu_over_nu", "ratio_se",
                               "flagged"], [list(r.to_dict().values()) for r in rows])
    sink.table("events_ak", ["k", "t_k", "level", "reached", "success", "frequency", "bound", "sigma",
                             "applicable", "ok"], [list(r.values()) for r in ak])
    u_rows = [[name, r.u_total[0], r.u_any_final_half[0], r.u_last_max[0]]
              for name, r in (("mu", rep_mu), ("nu", rep_nu))]
    sink.table("events_u", ["measure", "u_snapshots_total", "trajectories_with_u_in_final_half",
                            "latest_u_time"], u_rows)
    sink.table("series", ["t", "mu_pos", "mu_fr", "mu_max", "nu_pos", "nu_fr", "nu_max"],
               _series_rows(rep_mu, rep_nu))
    _instability_svgs(sink, rep_mu, rep_nu, S.label, rows, "nu")
    summary = {
        "pattern": pattern,
        "ak": ak,
        "u_events": {r[0]: {"total": r[1], "final_half": r[2], "latest": r[3]} for r in u_rows},
        "green_ratio": [r.to_dict() for r in rows],
        "mu": rep_mu.to_dict(),
        "nu": rep_nu.to_dict(),
    }
    return checks, summary


def _series_rows(*reps):
    snap = reps[0].snap_every
    rows = []
    for s in range(reps[0].series_mean.shape[0]):
        row = [s * snap]
        for r in reps:
            row.extend(float(v) for v in r.series_mean[s])
        rows.append(row)
    return rows


def _instability_svgs(sink, rep_mu, rep_nu, label, rows, nu_name):
    if "svg" not in sink.formats:
        return
    w_mu = rep_mu.pred_window_sums[rep_mu.labels.index(label)]
    w_nu = rep_nu.pred_window_sums[rep_nu.labels.index(label)]
    sink.svg(f"windows_{_slug(label)}_{_slug(nu_name)}", emit_svg(
        [("mu", list(enumerate(w_mu))), (nu_name, list(enumerate(w_nu)))],
        title=f"visits to {label} per window", xlabel="window", ylabel="visits", comment=sink.hash,
    ))
    pts = [(r.horizon, r.ratio) for r in rows if not r.flagged and r.ratio > 0]
    if pts:
        sink.svg(f"green_ratio_{_slug(label)}_{_slug(nu_name)}", emit_svg(
            [(f"G_mu/G_{nu_name}", pts)], title=f"Green ratio on {label}", xlabel="horizon",
            ylabel="ratio", log_x=True, log_y=True, comment=sink.hash,
        ))


def _slug(s):
    return re.sub(r"[^a-z0-9]+", "-", s.lower()).strip("-")


# ---------------------------------------------------------------------------
# polycyclic


def increment_law_check(desc, mu, eig, n_traj, n_steps, master_seed=0):
    """Exact-arithmetic check of |Delta (x, v1)| = (e_j, v1) e^phi on unit-type steps.

    Returns (steps_checked, max relative error).
    """
    cfg = WalkConfig(desc, mu, n_steps, n_traj, master_seed)
    checked, worst = 0, 0.0
    log_lam_hp = None
    for i in range(n_traj):
        prev = None
        for t, a, g in reference_walk(cfg, i):
            if a is not None and _unit_type(a):
                j = next(c for c, v in enumerate(a.x) if v)
                dx = tuple(p - q for p, q in zip(g.x, prev.x))
                # dx ~ e^|phi| while (dx, v1) may be ~ e^-|phi|: cancellation costs twice the size
                size = max(len(str(abs(v))) for v in dx)
                digits = 50 * ((2 * size + 40) // 50 + 1)
                v1 = v1_high_precision(desc, digits)
                with mpmath.workdps(digits):
                    if log_lam_hp is None or log_lam_hp[0] < digits:
                        log_lam_hp = (digits, _log_lambdas(desc, eig, digits))
                    lhs = abs(mpmath.fsum(mpmath.mpf(c) * w for c, w in zip(dx, v1)))
                    ph = mpmath.fsum(k * ll for k, ll in zip(prev.k, log_lam_hp[1]))
                    rhs = abs(v1[j]) * mpmath.exp(ph)
                    rel = float(abs(lhs - rhs) / rhs)
                worst = max(worst, rel)
                checked += 1
            prev = g
    return checked, worst


def _unit_type(a):
    return (
        sum(1 for v in a.k if v) == 1 and all(abs(v) <= 1 for v in a.k)
        and sum(1 for v in a.x if v) == 1 and all(abs(v) <= 1 for v in a.x)
    )


def _log_lambdas(desc, eig, digits):
    v1 = v1_high_precision(desc, digits)
    out = []
    for mat in desc.matrices:
        # v1 is a left eigenvector: lambda = (M^T v1)_r / v1_r for the largest component
        r = max(range(desc.d), key=lambda c: abs(v1[c]))
        num = mpmath.fsum(mat[s][r] * v1[s] for s in range(desc.d))
        out.append(mpmath.log(num / v1[r]))
    return out


def kernel_precision_check(desc, mu, eig, n_traj, n_steps, master_seed=0):
    """Largest |kernel ln|(x,v1)| - exact ln|(x,v1)|| at the end of short trajectories."""
    cfg = WalkConfig(desc, mu, n_steps, n_traj, master_seed)
    worst = 0.0
    for i in range(n_traj):
        st = run_trajectory(cfg, i)
        final = None
        for _, _, g in reference_walk(cfg, i):
            final = g
        exact = log_abs_ip(final.x, eig, desc)
        got = st.final["final_logip"]
        if exact == -math.inf or got == -math.inf:
            diff = 0.0 if exact == got else math.inf
        else:
            diff = abs(exact - got)
        worst = max(worst, diff)
    return worst


def _require_exponential(spec):
    desc = parse_group(spec.resolved_group(), spec.matrices)
    if desc.family != "polycyclic":
        raise ConfigError(f"{spec.name} needs a polycyclic group, got {spec.resolved_group()}")
    eig = compute_eigendata(desc)
    if not eig.exponential_growth:
        raise ConfigError("the action has polynomial growth (all lambda = 1); no instability to test")
    return desc, eig


def _polycyclic_instability(spec, sink):
    desc, eig = _require_exponential(spec)
    preds = [PolycyclicS(c, eig) for c in spec.big_c]
    mu = polycyclic_mu(desc)
    rep_mu = _ensemble(spec, desc, mu, preds)
    reps_nu = {b: _ensemble(spec, desc, polycyclic_nu(desc, b), preds) for b in spec.beta}
    patterns, ratio_rows, green_rows = [], {}, []
    for S in preds:
        for b, rep_nu in reps_nu.items():
            pat, rows = instability_pattern(rep_mu, rep_nu, S.label)
            pat = dict(pat, C=S.C, beta=b)
            patterns.append(pat)
            ratio_rows[(S.C, b)] = rows
            for r in rows:
                green_rows.append([S.C, b] + list(r.to_dict().values()))
    winners = [p for p in patterns if p["pass"]]
    inc = {}
    for name, m in [("mu", mu)] + [(f"nu(beta={b})", polycyclic_nu(desc, b)) for b in spec.beta]:
        inc[name] = increment_law_check(desc, m, eig, spec.increment_trajectories, spec.increment_steps, spec.seed)
    prec = {name: kernel_precision_check(desc, m, eig, spec.increment_trajectories, spec.increment_steps,
                                         spec.seed)
            for name, m in [("mu", mu)] + [(f"nu(beta={b})", polycyclic_nu(desc, b)) for b in spec.beta]}
    inc_ok = all(n > 0 and w <= 1e-6 for n, w in inc.values())
    checks = [
        _conservation_check("mu and nu", [rep_mu, *reps_nu.values()]),
        Check("some (C, beta) shows the instability pattern (a)(b)(c)", bool(winners), False,
              ", ".join(f"C={p['C']:g}/beta={p['beta']}" for p in winners) or "none"),
        Check("increment law |d(x,v1)| = (e_j,v1) e^phi within 1e-6 on every checked step", inc_ok, True,
              "; ".join(f"{k}: {n} steps, max rel err {w:.2e}" for k, (n, w) in inc.items())),
        Check("kernel ln|(x,v1)| agrees with exact arithmetic within 1e-6", all(v <= 1e-6 for v in prec.values()),
              False, "; ".join(f"{k}: {v:.2e}" for k, v in prec.items())),
    ]
    sink.table("pattern", ["C", "beta", "zero_final_half_share_mu", "tail_ratio_nu", "green_ratio_nu_over_mu",
                           "ratio_decreasing", "a", "b", "c", "pass"],
               [[p["C"], p["beta"], p["zero_final_half_share_mu"], p["tail_ratio_nu"],
                 p["green_ratio_nu_over_mu"], p["ratio_decreasing"], p["a"], p["b"], p["c"], p["pass"]]
                for p in patterns])
    sink.table("green_ratio", ["C", "beta", "horizon", "g_mu", "se_mu", "g_nu", "se_nu", "ratio_mu_over_nu",
                               "ratio_se", "flagged"], green_rows)
    labels = [S.label for S in preds]
    reps = [rep_mu] * len(preds) + [r for r in reps_nu.values() for _ in preds]
    cols = [f"mu_{lab}" for lab in labels] + [f"nu_beta{b}_{lab}" for b in reps_nu for lab in labels]
    sink.table("windows", ["window", "t_start", "t_end"] + cols,
               _window_rows(reps, labels + labels * len(reps_nu)))
    sink.table("increments", ["measure", "steps_checked", "max_relative_error", "kernel_log_ip_max_abs_diff"],
               [[k, n, w, prec[k]] for k, (n, w) in inc.items()])
    best = max(patterns, key=lambda p: (p["pass"], p["a"] + p["b"] + p["c"], p["tail_ratio_nu"]))
    _instability_svgs(sink, rep_mu, reps_nu[best["beta"]], preds[spec.big_c.index(best["C"])].label,
                      ratio_rows[(best["C"], best["beta"])], f"nu(beta={best['beta']})")
    summary = {
        "eigendata": eig.to_dict(),
        "patterns": patterns,
        "best": {"C": best["C"], "beta": best["beta"]},
        "increment_law": {k: {"steps": n, "max_relative_error": w} for k, (n, w) in inc.items()},
        "kernel_log_ip_max_abs_diff": prec,
        "mu": rep_mu.to_dict(),
        "nu": {str(b): r.to_dict() for b, r in reps_nu.items()},
    }
    return checks, summary


# ---------------------------------------------------------------------------
# oracle cross-check


def _pairs_at_identity(mu):
    desc = mu.descriptor
    e = identity(desc)
    total = Fraction(0)
    for g, a in mu.atoms:
        for h, b in mu.atoms:
            if multiply(desc, g, h) == e:
                total += a * b
    return total


def _oracle(spec, sink):
    desc = parse_group(spec.resolved_group(), spec.matrices)
    wreath = desc if desc.family == "wreath" and desc.lamp_modulus else Wreath(1, 2)
    cases = [("lamplighter mu", lamplighter_mu(wreath)), ("Z srw", srw_lattice(1))]
    checks, rows, summary = [], [], {}
    for name, mu in cases:
        res, stray, sums = crosscheck_power(mu, spec.oracle_n, spec.oracle_walks, spec.seed)
        powers = exact_power(mu, spec.oracle_n)
        sym = all(p.is_symmetric() for p in powers)
        checks.append(Check(f"{name}: every exact power sums to 1", all(s == 1 for s in sums), True))
        checks.append(Check(f"{name}: exact powers are symmetric", sym, True))
        checks.append(Check(f"{name}: Monte Carlo endpoints stay in the exact support", not stray, True,
                            f"{len(stray)} stray endpoints"))
        worst = max((abs(r.z) for r in res), default=0.0)
        checks.append(Check(f"{name}: MC frequencies within {SIGMAS:g} sigma for atoms >= 1e-3",
                            all(r.ok for r in res), False, f"{len(res)} atoms, max |z| = {worst:.3f}"))
        for r in res:
            rows.append([name, r.n, repr(r.element), f"{r.exact.numerator}/{r.exact.denominator}", r.empirical,
                         r.z, r.ok])
        two = _pairs_at_identity(mu)
        checks.append(Check(f"{name}: mu^*2(e) equals exhaustive pair enumeration",
                            two == powers[2].weight(identity(mu.descriptor)) if spec.oracle_n >= 2 else True,
                            True, str(two)))
        summary[name] = {"atoms_compared": len(res), "max_abs_z": worst, "support_sizes": [len(p) for p in powers],
                         "mu2_identity": two}
    z = srw_lattice(1)
    g4 = green_truncated_exact(z, LatticeElement((0,)), 4)
    checks.append(Check("Z srw: G_4(0, 0) = 15/8", g4 == Fraction(15, 8), True, str(g4)))
    greens = [[n, str(green_truncated_exact(z, LatticeElement((0,)), n))] for n in range(spec.oracle_n + 1)]
    sink.table("crosscheck", ["measure", "n", "element", "exact", "empirical", "z", "ok"], rows)
    sink.table("green_exact", ["n_max", "green_z_origin"], greens)
    summary["green_z_origin"] = {str(n): g for n, g in greens}
    return checks, summary


# ---------------------------------------------------------------------------
# lattice sanity


def _lattice(spec, sink):
    hs = default_horizons(spec)
    rows, summary, checks = [], {}, []
    for d in (1, 2, 3):
        desc = Lattice(d)
        rep = _ensemble(spec, desc, srw_lattice(d), targets=[identity(desc)], horizons=hs)
        ests = green_from_report(rep, targets=[identity(desc)])
        for e in ests:
            rows.append([d, e.horizon, e.visits_mean, e.visits_stderr, e.n_trajectories])
        means = [e.visits_mean for e in ests]
        summary[f"z{d}"] = [e.to_dict() for e in ests]
        if d < 3:
            inc = all(b > a for a, b in zip(means, means[1:]))
            checks.append(Check(f"Z{d}: origin visits strictly increase with horizon", inc, False, str(means)))
        else:
            target, tol = Z3_GREEN
            g = means[-1]
            checks.append(Check(f"Z3: origin Green estimate {target} +- {tol} at horizon {hs[-1]}",
                                abs(g - target) <= tol, False, f"{g:.4f} +- {ests[-1].visits_stderr:.4f}"))
    sink.table("lattice_green", ["d", "horizon", "visits_mean", "visits_stderr", "trajectories"], rows)
    if "svg" in sink.formats:
        series = [(f"Z{d}", [(r[1], r[2]) for r in rows if r[0] == d]) for d in (1, 2, 3)]
        sink.svg("lattice_green", emit_svg(series, title="origin visits vs horizon", xlabel="horizon",
                                           ylabel="mean visits", log_x=True, log_y=True, comment=sink.hash))
    return checks, summary


# ---------------------------------------------------------------------------
# green


def _green(spec, sink):
    desc = parse_group(spec.resolved_group(), spec.matrices)
    hs = default_horizons(spec)
    checks, rows, summary = [], [], {}
    if desc.family == "polycyclic":
        eig = compute_eigendata(desc)
        preds = [PolycyclicS(c, eig) for c in spec.big_c]
        measures = builder_measures(spec, desc)
        for name, mu in measures.items():
            rep = _ensemble(spec, desc, mu, preds, horizons=hs)
            checks.append(_conservation_check(name, [rep]))
            for e in green_from_report(rep, preds):
                rows.append([name, e.to_dict()["target"], e.horizon, e.visits_mean, e.visits_stderr])
    else:
        e0 = identity(desc)
        preds = [WreathS(spec.epsilon)] if desc.family == "wreath" else []
        for name, mu in builder_measures(spec, desc).items():
            rep = _ensemble(spec, desc, mu, preds, targets=[e0], horizons=hs)
            checks.append(_conservation_check(name, [rep]))
            for e in green_from_report(rep, preds, [e0]):
                rows.append([name, e.to_dict()["target"], e.horizon, e.visits_mean, e.visits_stderr])
        exact_rows = []
        mu0 = next(iter(builder_measures(spec, desc).values()))
        n_exact = min(spec.oracle_n, 6)
        try:
            powers = exact_power(mu0, n_exact)
        except Exception as exc:  # cap exceeded: report how far we got
            summary["exact_error"] = str(exc)
            powers = []
        acc = Fraction(0)
        for n, p in enumerate(powers):
            acc += p.weight(e0)
            exact_rows.append([n, f"{acc.numerator}/{acc.denominator}", float(acc)])
        sink.table("green_exact", ["n_max", "green_identity_exact", "as_float"], exact_rows)
        summary["green_exact"] = {str(r[0]): r[1] for r in exact_rows}
    sink.table("green", ["measure", "target", "horizon", "visits_mean", "visits_stderr"], rows)
    summary["estimates"] = [dict(zip(["measure", "target", "horizon", "visits_mean", "visits_stderr"], r))
                            for r in rows]
    return checks, summary


_RUNNERS = {
    "validate": _validate,
    "maxineq": _maxineq,
    "wreath-instability": _wreath_instability,
    "polycyclic-instability": _polycyclic_instability,
    "oracle-crosscheck": _oracle,
    "lattice-sanity": _lattice,
    "green": _green,
}
