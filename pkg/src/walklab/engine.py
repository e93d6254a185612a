"""Ensemble simulation of right-multiplication walks with online observers.

A trajectory is xi_n = xi_{n-1} g_n with g_n i.i.d. from the measure,
started at the identity.  Every trajectory is a pure function of
``(config, index)``; ensembles fold trajectory statistics in index order so
the report does not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .groups import GroupError, identity, multiply
from .observables import (
    PolycyclicS,
    WreathS,
    compute_eigendata,
    ip_v1,
)
from .rng import Xoshiro256, trajectory_seed

__all__ = [
    "WalkConfig",
    "TrajectoryStats",
    "EnsembleReport",
    "AkEvent",
    "TrajectoryError",
    "run_trajectory",
    "run_ensemble",
    "reference_walk",
    "detect_A_k",
    "detect_U_n",
    "tail_statistic",
    "ak_schedule",
    "t_k",
]


class TrajectoryError(RuntimeError):
    def __init__(self, index, cause):
        super().__init__(f"trajectory {index} failed: {cause!r}")
        self.index = index
        self.cause = cause


def t_k(k):
    """floor(log k / log 4), computed in integers."""
    t = 0
    while 4 ** (t + 1) <= k:
        t += 1
    return t


def ak_level(k):
    """Smallest integer y with y >= sqrt(k)."""
    r = math.isqrt(k)
    return r if r * r == k else r + 1


def ak_schedule(n_max_level):
    """k = 4^j for all j whose first-passage level 2^j is at most ``n_max_level``."""
    out, j = [], 0
    while 2**j <= n_max_level:
        out.append(4**j)
        j += 1
    return out


@dataclass
class WalkConfig:
    descriptor: object
    measure: object
    n_steps: int
    n_trajectories: int = 1
    master_seed: int = 0
    predicates: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    horizons: list = field(default_factory=list)
    ak_schedule: list = field(default_factory=list)
    jump: int = 8
    window_count: int = 20
    snapshots: int = 1000
    backend: str | None = None

    def __post_init__(self):
        if self.n_steps < 0 or self.n_trajectories < 1:
            raise ValueError("need n_steps >= 0 and n_trajectories >= 1")
        if self.window_count < 1:
            raise ValueError("window_count must be >= 1")
        if self.measure.descriptor != self.descriptor:
            raise GroupError("measure lives on a different group than the walk")
        fam = self.descriptor.family
        for S in self.predicates:
            want = WreathS if fam == "wreath" else PolycyclicS if fam == "polycyclic" else None
            if want is None or not isinstance(S, want):
                raise GroupError(f"predicate {S!r} does not apply to a {fam} walk")
        if self.targets and fam == "polycyclic":
            raise GroupError("pointwise targets are not tracked for polycyclic walks; use S(C) predicates")
        hs = sorted(set(int(h) for h in self.horizons))
        if hs and (hs[0] < 0 or hs[-1] > self.n_steps):
            raise ValueError(f"horizons must lie in [0, {self.n_steps}]")
        self.horizons = hs
        if self.ak_schedule and fam != "wreath":
            raise GroupError("A_k events are defined for lamplighter walks")
        self.ak_schedule = sorted(int(k) for k in self.ak_schedule)
        self._plan = None

    @property
    def snap_every(self):
        return max(1, self.n_steps // self.snapshots)

    @property
    def labels(self):
        return [S.label for S in self.predicates]

    @property
    def window_block(self):
        return max(1, (self.n_steps + 1) // self.window_count)

    def window_of(self, t):
        return min(t // self.window_block, self.window_count - 1)

    def plan(self):
        if self._plan is None:
            self._plan = _Plan(self)
        return self._plan


def _i64(rows, width):
    arr = np.array(rows, dtype=np.int64).reshape(-1, width)
    return np.ascontiguousarray(arr)


class _Plan:
    """Flat kernel arrays for one configuration."""

    def __init__(self, cfg):
        desc, mu = cfg.descriptor, cfg.measure
        self.family = desc.family
        self.kern = kernels.load(cfg.backend) if cfg.backend else kernels.backend
        table = mu.sampler
        self.prob = np.array(table.prob, dtype=np.float64)
        self.alias = np.array(table.alias, dtype=np.int64)
        self.horizons = np.array(cfg.horizons, dtype=np.int64)
        els = mu.elements
        if self.family == "lattice":
            d = desc.d
            self.dpos = _i64([g.x for g in els], d)
            self.targets = _i64([g.x for g in cfg.targets], d)
        elif self.family == "wreath":
            d = desc.d
            self.d, self.q = d, desc.lamp_modulus or 0
            self.dpos = _i64([g.pos for g in els], d)
            self.lptr, self.lsite, self.lval = _lamp_arrays(els, d)
            self.coef = np.array([S.coefficient for S in cfg.predicates], dtype=np.float64)
            self.tpos = _i64([g.pos for g in cfg.targets], d)
            self.tlptr, self.tlsite, self.tlval = _lamp_arrays(cfg.targets, d)
            self.ak_k = list(cfg.ak_schedule)
            self.ak_level = np.array([ak_level(k) for k in self.ak_k], dtype=np.int64)
            self.ak_t = np.array([t_k(k) for k in self.ak_k], dtype=np.int64)
            limit = 2**62 // max(1, int(np.abs(self.dpos).max(initial=0)))
            if cfg.n_steps > limit:
                raise OverflowError("walk positions could overflow 64-bit integers")
        else:
            eig = cfg.predicates[0].eig if cfg.predicates else compute_eigendata(desc)
            self.eig = eig
            self.dk = _i64([g.k for g in els], desc.m)
            self.ipy = np.array([ip_v1(g.x, eig) for g in els], dtype=np.float64)
            self.log_lam = np.array(eig.log_lam_v1, dtype=np.float64)
            self.Cs = np.array([S.C for S in cfg.predicates], dtype=np.float64)

    def run(self, cfg, seed):
        k = self.kern
        n, W, snap = cfg.n_steps, cfg.window_count, cfg.snap_every
        if self.family == "lattice":
            return k.lattice_trajectory(self.dpos, self.prob, self.alias, n, seed, self.targets,
                                        self.horizons, W, snap)
        if self.family == "wreath":
            return k.wreath_trajectory(
                self.d, self.q, self.dpos, self.lptr, self.lsite, self.lval, self.prob, self.alias,
                n, seed, self.coef, self.tpos, self.tlptr, self.tlsite, self.tlval, self.horizons,
                W, snap, self.ak_level, self.ak_t, cfg.jump,
            )
        return k.polycyclic_trajectory(self.dk, self.ipy, self.log_lam, self.prob, self.alias, n, seed,
                                       self.Cs, self.horizons, W, snap)


def _lamp_arrays(elements, d):
    ptr, sites, vals = [0], [], []
    for g in elements:
        for site, value in g.lamps:
            sites.append(site)
            vals.append(value)
        ptr.append(len(vals))
    return (
        np.array(ptr, dtype=np.int64),
        _i64(sites, d) if sites else np.zeros((0, d), dtype=np.int64),
        np.array(vals, dtype=np.int64),
    )


@dataclass
class AkEvent:
    k: int
    t_k: int
    n_k: int  # -1: level never reached
    success: int  # -1: not applicable within the horizon


@dataclass
class TrajectoryStats:
    index: int
    n_steps: int
    pred_windows: np.ndarray
    pred_horizons: np.ndarray
    pred_last: np.ndarray
    targ_windows: np.ndarray
    targ_horizons: np.ndarray
    targ_last: np.ndarray
    series: np.ndarray
    u_flags: np.ndarray
    ak_events: list
    final: dict

    @property
    def pred_totals(self):
        return self.pred_windows.sum(axis=1)

    @property
    def targ_totals(self):
        return self.targ_windows.sum(axis=1)


def run_trajectory(cfg, index):
    if not 0 <= index < cfg.n_trajectories:
        raise IndexError(f"trajectory index {index} outside [0, {cfg.n_trajectories})")
    plan = cfg.plan()
    out = plan.run(cfg, trajectory_seed(cfg.master_seed, index))
    P, T, W = len(cfg.predicates), len(cfg.targets), cfg.window_count
    empty = np.zeros((0, W), dtype=np.int64)
    ak = []
    if plan.family == "wreath":
        for j, k in enumerate(plan.ak_k):
            ak.append(AkEvent(k, int(plan.ak_t[j]), int(out["ak_nk"][j]), int(out["ak_success"][j])))
    final = {key: (v.tolist() if isinstance(v, np.ndarray) else v)
             for key, v in out.items() if key.startswith("final")}
    S = out["series"].shape[0]
    return TrajectoryStats(
        index=index,
        n_steps=cfg.n_steps,
        pred_windows=out.get("pred_windows", empty[:P]),
        pred_horizons=out.get("pred_horizons", np.zeros((P, len(cfg.horizons)), dtype=np.int64)),
        pred_last=out.get("pred_last", np.zeros(P, dtype=np.int64)),
        targ_windows=out.get("targ_windows", np.zeros((T, W), dtype=np.int64)),
        targ_horizons=out.get("targ_horizons", np.zeros((T, len(cfg.horizons)), dtype=np.int64)),
        targ_last=out.get("targ_last", np.zeros(T, dtype=np.int64)),
        series=out["series"],
        u_flags=out.get("u_flags", np.zeros((P, S), dtype=np.uint8)),
        ak_events=ak,
        final=final,
    )


class _PairwiseSum:
    """Pairwise (binary-counter) summation of arrays in arrival order."""

    def __init__(self):
        self.stack = []

    def add(self, arr):
        level, acc = 0, np.array(arr, dtype=np.float64)
        while self.stack and self.stack[-1][0] == level:
            _, prev = self.stack.pop()
            acc = prev + acc
            level += 1
        self.stack.append((level, acc))

    def total(self):
        out = None
        for _, arr in reversed(self.stack):
            out = arr if out is None else arr + out
        return out


@dataclass
class EnsembleReport:
    labels: list
    target_labels: list
    n_steps: int
    n_trajectories: int
    master_seed: int
    window_count: int
    window_block: int
    horizons: list
    snap_every: int
    pred_window_sums: list
    pred_horizon_sum: list
    pred_horizon_sumsq: list
    pred_zero_final_half: list
    targ_window_sums: list
    targ_horizon_sum: list
    targ_horizon_sumsq: list
    ak_k: list
    ak_t: list
    ak_reached: list
    ak_success: list
    u_total: list
    u_any_final_half: list
    u_last_max: list
    final_gap_hist: dict
    final_max_sum: float
    series_mean: np.ndarray
    conservation_ok: bool = True

    def to_dict(self):
        return {
            "labels": self.labels,
            "target_labels": self.target_labels,
            "n_steps": self.n_steps,
            "n_trajectories": self.n_trajectories,
            "master_seed": self.master_seed,
            "window_count": self.window_count,
            "window_block": self.window_block,
            "horizons": self.horizons,
            "snap_every": self.snap_every,
            "pred_window_sums": self.pred_window_sums,
            "pred_horizon_sum": self.pred_horizon_sum,
            "pred_horizon_sumsq": self.pred_horizon_sumsq,
            "pred_zero_final_half": self.pred_zero_final_half,
            "targ_window_sums": self.targ_window_sums,
            "targ_horizon_sum": self.targ_horizon_sum,
            "targ_horizon_sumsq": self.targ_horizon_sumsq,
            "ak": [
                {"k": k, "t_k": t, "reached": r, "success": s}
                for k, t, r, s in zip(self.ak_k, self.ak_t, self.ak_reached, self.ak_success)
            ],
            "u_total": self.u_total,
            "u_any_final_half": self.u_any_final_half,
            "u_last_max": self.u_last_max,
            "final_gap_hist": {str(k): v for k, v in sorted(self.final_gap_hist.items())},
            "final_max_mean": self.final_max_sum / self.n_trajectories,
            "conservation_ok": self.conservation_ok,
        }

    def horizon_mean(self, p, h, targets=False):
        s = (self.targ_horizon_sum if targets else self.pred_horizon_sum)[p][h]
        return s / self.n_trajectories

    def horizon_stderr(self, p, h, targets=False):
        n = self.n_trajectories
        s = (self.targ_horizon_sum if targets else self.pred_horizon_sum)[p][h]
        ss = (self.targ_horizon_sumsq if targets else self.pred_horizon_sumsq)[p][h]
        if n < 2:
            return 0.0
        var = (ss - s * s / n) / (n - 1)
        return math.sqrt(max(var, 0.0) / n)


def run_ensemble(cfg, threads=1):
    plan = cfg.plan()
    P, T, W, H = len(cfg.predicates), len(cfg.targets), cfg.window_count, len(cfg.horizons)
    half = W // 2
    snap = cfg.snap_every
    S = cfg.n_steps // snap + 1
    # final half of the snapshot schedule mirrors the final half of the windows
    snap_half = sum(1 for s in range(S) if cfg.window_of(s * snap) < half)
    J = len(cfg.ak_schedule)
    pw = [[0] * W for _ in range(P)]
    phs = [[0] * H for _ in range(P)]
    phq = [[0] * H for _ in range(P)]
    zero_half = [0] * P
    tw = [[0] * W for _ in range(T)]
    ths = [[0] * H for _ in range(T)]
    thq = [[0] * H for _ in range(T)]
    ak_reached, ak_succ = [0] * J, [0] * J
    u_total, u_any, u_last = [0] * P, [0] * P, [-1] * P
    gaps = Counter()
    max_sum = 0.0
    series = _PairwiseSum()
    conserved = True

    def one(i):
        try:
            return run_trajectory(cfg, i)
        except Exception as exc:  # re-raised with the failing index
            raise TrajectoryError(i, exc) from exc

    if threads > 1:
        pool = ThreadPoolExecutor(max_workers=threads)
        results = pool.map(one, range(cfg.n_trajectories))
    else:
        pool = None
        results = map(one, range(cfg.n_trajectories))
    try:
        for st in results:
            for p in range(P):
                row = st.pred_windows[p]
                for w in range(W):
                    pw[p][w] += int(row[w])
                for h in range(H):
                    v = int(st.pred_horizons[p, h])
                    phs[p][h] += v
                    phq[p][h] += v * v
                if not row[half:].any():
                    zero_half[p] += 1
                flags = st.u_flags[p]
                cnt = int(flags.sum())
                u_total[p] += cnt
                if flags[snap_half:].any():
                    u_any[p] += 1
                    last = int(np.nonzero(flags)[0][-1]) * snap
                    u_last[p] = max(u_last[p], last)
                if H and cfg.horizons[-1] == cfg.n_steps and int(st.pred_horizons[p, -1]) != int(row.sum()):
                    conserved = False
            for j in range(T):
                row = st.targ_windows[j]
                for w in range(W):
                    tw[j][w] += int(row[w])
                for h in range(H):
                    v = int(st.targ_horizons[j, h])
                    ths[j][h] += v
                    thq[j][h] += v * v
            for j, ev in enumerate(st.ak_events):
                if ev.success >= 0:
                    ak_reached[j] += 1
                    ak_succ[j] += ev.success
            if plan.family == "wreath":
                gaps[int(st.final["final_max"]) - int(st.final["final_fr"])] += 1
            max_sum += float(st.final["final_max"])
            series.add(np.where(np.isfinite(st.series), st.series, np.nan))
    finally:
        if pool is not None:
            pool.shutdown()
    return EnsembleReport(
        labels=cfg.labels,
        target_labels=[repr(g) for g in cfg.targets],
        n_steps=cfg.n_steps,
        n_trajectories=cfg.n_trajectories,
        master_seed=cfg.master_seed,
        window_count=W,
        window_block=cfg.window_block,
        horizons=list(cfg.horizons),
        snap_every=snap,
        pred_window_sums=pw,
        pred_horizon_sum=phs,
        pred_horizon_sumsq=phq,
        pred_zero_final_half=zero_half,
        targ_window_sums=tw,
        targ_horizon_sum=ths,
        targ_horizon_sumsq=thq,
        ak_k=list(cfg.ak_schedule),
        ak_t=[t_k(k) for k in cfg.ak_schedule],
        ak_reached=ak_reached,
        ak_success=ak_succ,
        u_total=u_total,
        u_any_final_half=u_any,
        u_last_max=u_last,
        final_gap_hist=dict(gaps),
        final_max_sum=max_sum,
        series_mean=series.total() / cfg.n_trajectories,
        conservation_ok=conserved,
    )


# ---------------------------------------------------------------------------
# exact reference walk and offline detectors


def reference_walk(cfg, index, n_steps=None):
    """Yield (t, atom, element) along trajectory ``index`` using exact group arithmetic.

    Draws the same atoms as the kernels (same seed, same alias table), so it
    is an independent check of every online observable.
    """
    desc, mu = cfg.descriptor, cfg.measure
    n = cfg.n_steps if n_steps is None else n_steps
    rng = Xoshiro256(trajectory_seed(cfg.master_seed, index))
    table = mu.sampler
    atoms = mu.elements
    g = identity(desc)
    yield 0, None, g
    for t in range(1, n + 1):
        a = atoms[table.draw(rng)]
        g = multiply(desc, g, a)
        yield t, a, g


def detect_A_k(positions, schedule, jump=8):
    """Offline A_k detector over a full-resolution trace of first coordinates.

    n_k is the first n with Y_n >= sqrt(k); A_k holds when
    Y_{n_k + t_k} = Y_{n_k} + jump * t_k.
    """
    events = []
    n = len(positions) - 1
    for k in schedule:
        level, tk = ak_level(k), t_k(k)
        nk = next((i for i, y in enumerate(positions) if y >= level), -1)
        if nk < 0 or nk + tk > n:
            events.append(AkEvent(k, tk, nk, -1))
            continue
        ok = positions[nk + tk] == positions[nk] + jump * tk
        events.append(AkEvent(k, tk, nk, int(ok)))
    return events


def detect_U_n(series, predicate, snap_every=1):
    """Offline U_n detector over decimated (position, flag, running max) rows.

    Wreath: U_n = {M_n - F_R >= (2+5 eps) log2 M_n}; polycyclic:
    U_n = {M_n - ln|(x_n, v1)| >= C ln M_n}.  Rows with M_n <= 1 never count.
    Returns (times where U_n holds, last time or -1).
    """
    if isinstance(predicate, WreathS):
        c = predicate.coefficient
    elif isinstance(predicate, PolycyclicS):
        c = predicate.C
    else:
        raise TypeError(f"unknown predicate {predicate!r}")
    times = []
    for s, (_, flag, mx) in enumerate(np.asarray(series)):
        if mx > 1 and mx - flag >= c * math.log(mx):
            times.append(s * snap_every)
    return times, (times[-1] if times else -1)


@dataclass
class TailStat:
    first_half_visits: int
    second_half_visits: int
    per_window: list
    ratio: float
    no_visits: bool


def tail_statistic(report, predicate):
    """Second-half over first-half mean per-window visits for one predicate."""
    if isinstance(predicate, int):
        p = predicate
    else:
        label = predicate if isinstance(predicate, str) else predicate.label
        if label not in report.labels:
            raise KeyError(f"predicate {label} was not observed")
        p = report.labels.index(label)
    per = list(report.pred_window_sums[p])
    half = report.window_count // 2
    first, second = sum(per[:half]), sum(per[half:])
    n1, n2 = half, report.window_count - half
    if first + second == 0:
        return TailStat(0, 0, per, 0.0, True)
    if first == 0:
        return TailStat(first, second, per, math.inf, False)
    return TailStat(first, second, per, (second / n2) / (first / n1), False)
