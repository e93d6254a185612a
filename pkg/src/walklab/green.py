"""Green's function estimates: Monte Carlo visit counts and exact truncated sums.

``G(e, x) = sum_n mu^{*n}(x)`` is the expected number of visits to ``x``.
Every estimate here is truncated at an explicit horizon; nothing is
extrapolated to infinite time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import kernels
from .engine import WalkConfig, run_ensemble
from .groups import GroupError, LatticeElement, canonical_key, identity, wreath_element
from .measures import DEFAULT_SUPPORT_CAP, SupportCapExceeded, convolve, point_mass
from .observables import PolycyclicS, WreathS
from .rng import mix64

__all__ = [
    "GreenEstimate",
    "PowerCapExceeded",
    "RatioRow",
    "mc_green",
    "exact_power",
    "green_truncated_exact",
    "ratio_series",
    "green_from_report",
    "mc_endpoint_frequencies",
    "crosscheck_power",
]


@dataclass
class GreenEstimate:
    target: object
    horizon: int
    visits_mean: float
    visits_stderr: float
    n_trajectories: int
    truncated: bool = True

    def to_dict(self):
        label = getattr(self.target, "label", None) or repr(self.target)
        return {
            "target": label,
            "horizon": self.horizon,
            "visits_mean": self.visits_mean,
            "visits_stderr": self.visits_stderr,
            "n_trajectories": self.n_trajectories,
            "truncated": self.truncated,
        }


def green_from_report(report, predicates=(), targets=()):
    """GreenEstimates for every observed predicate/target and horizon of a report."""
    out = []
    for p, S in enumerate(predicates):
        for h, hz in enumerate(report.horizons):
            out.append(GreenEstimate(S, hz, report.horizon_mean(p, h), report.horizon_stderr(p, h),
                                     report.n_trajectories))
    for j, g in enumerate(targets):
        for h, hz in enumerate(report.horizons):
            out.append(GreenEstimate(g, hz, report.horizon_mean(j, h, targets=True),
                                     report.horizon_stderr(j, h, targets=True), report.n_trajectories))
    return out


def mc_green(cfg, targets, horizons=None, threads=1):
    """Monte Carlo Green estimates for a list of elements or set predicates.

    ``horizons`` defaults to ``[cfg.n_steps]``.  Visits at time 0 count.
    """
    if isinstance(targets, (WreathS, PolycyclicS)):
        targets = [targets]
    preds = [t for t in targets if isinstance(t, (WreathS, PolycyclicS))]
    elems = [t for t in targets if not isinstance(t, (WreathS, PolycyclicS))]
    for g in elems:
        canonical_key(cfg.descriptor, g)  # raises GroupError on a foreign element
    hs = sorted(set(horizons or [cfg.n_steps]))
    run = replace(cfg, predicates=preds, targets=elems, horizons=hs, ak_schedule=[])
    rep = run_ensemble(run, threads=threads)
    return green_from_report(rep, preds, elems)


class PowerCapExceeded(SupportCapExceeded):
    def __init__(self, n_reached, cap):
        super().__init__(f"support of mu^*{n_reached + 1} exceeds {cap} atoms; computed up to n = {n_reached}")
        self.n_reached = n_reached
        self.cap = cap


def exact_power(mu, n_max, cap=DEFAULT_SUPPORT_CAP):
    """[mu^{*0}, ..., mu^{*n_max}] with exact rational weights."""
    powers = [point_mass(mu.descriptor)]
    for n in range(1, n_max + 1):
        try:
            powers.append(convolve(powers[-1], mu, cap=cap))
        except SupportCapExceeded:
            raise PowerCapExceeded(n - 1, cap) from None
    return powers


def green_truncated_exact(mu, x, n_max, cap=DEFAULT_SUPPORT_CAP):
    total = Fraction(0)
    for p in exact_power(mu, n_max, cap):
        total += p.weight(x)
    return total


@dataclass
class RatioRow:
    horizon: int
    g_mu: float
    se_mu: float
    g_nu: float
    se_nu: float
    ratio: float
    ratio_se: float
    flagged: bool

    def to_dict(self):
        return dict(self.__dict__)


def _estimates_by_horizon(report, label):
    if label not in report.labels:
        raise KeyError(f"predicate {label} was not observed")
    p = report.labels.index(label)
    return {h: (report.horizon_mean(p, i), report.horizon_stderr(p, i)) for i, h in enumerate(report.horizons)}


def ratio_series(report_mu, report_nu, predicate, horizons=None):
    """G_mu(S; h) / G_nu(S; h) per horizon with first-order error propagation."""
    label = predicate if isinstance(predicate, str) else predicate.label
    a = _estimates_by_horizon(report_mu, label)
    b = _estimates_by_horizon(report_nu, label)
    hs = horizons or sorted(set(a) & set(b))
    rows = []
    for h in hs:
        if h not in a or h not in b:
            raise KeyError(f"horizon {h} missing from one of the reports")
        (gm, sm), (gn, sn) = a[h], b[h]
        if gn == 0:
            rows.append(RatioRow(h, gm, sm, gn, sn, math.nan, math.nan, True))
            continue
        r = gm / gn
        rel = (sm / gm) ** 2 if gm else 0.0
        rel += (sn / gn) ** 2
        se = abs(r) * math.sqrt(rel) if gm else sm / gn
        rows.append(RatioRow(h, gm, sm, gn, sn, r, se, False))
    return rows


# ---------------------------------------------------------------------------
# Monte Carlo endpoint law against the exact oracle


def _endpoint_plan(mu, n):
    desc = mu.descriptor
    table = mu.sampler
    prob = np.array(table.prob, dtype=np.float64)
    alias = np.array(table.alias, dtype=np.int64)
    els = mu.elements
    if desc.family == "lattice":
        dpos = np.array([g.x for g in els], dtype=np.int64).reshape(-1, desc.d)
        radius = n * int(np.abs(dpos).max(initial=0))
        return ("lattice", dpos, prob, alias, radius)
    if desc.family == "wreath":
        if desc.lamp_modulus is None:
            raise GroupError("endpoint codes need a finite lamp group")
        from .engine import _lamp_arrays

        d = desc.d
        dpos = np.array([g.pos for g in els], dtype=np.int64).reshape(-1, d)
        lptr, lsite, lval = _lamp_arrays(els, d)
        reach = int(np.abs(lsite).max(initial=0))
        radius = n * int(np.abs(dpos).max(initial=0)) + reach
        cells = (2 * radius + 1) ** d
        if cells * math.log2(desc.lamp_modulus) + math.log2(cells) > 62:
            raise OverflowError("endpoint code would not fit in 63 bits; lower n")
        return ("wreath", d, desc.lamp_modulus, dpos, lptr, lsite, lval, prob, alias, radius)
    raise GroupError("endpoint sampling covers lattice and lamplighter walks")


def _decode_endpoint(desc, code, radius):
    B = 2 * radius + 1
    d = desc.d

    def cell(idx):
        out = []
        for _ in range(d):
            out.append(idx % B - radius)
            idx //= B
        return tuple(out)

    if desc.family == "lattice":
        return LatticeElement(cell(code))
    q = desc.lamp_modulus
    cells = B**d
    pos = cell(code % cells)
    rest = code // cells
    lamps = {}
    for idx in range(cells):
        rest, v = divmod(rest, q)
        if v:
            lamps[cell(idx)] = v
    return wreath_element(desc, lamps, pos)


def mc_endpoint_frequencies(mu, n, n_walks, master_seed=0, backend=None):
    """Empirical law of the walk at time n over ``n_walks`` independent walks."""
    desc = mu.descriptor
    kern = kernels.load(backend) if backend else kernels.backend
    if n == 0:
        return {identity(desc): n_walks}
    plan = _endpoint_plan(mu, n)
    if plan[0] == "lattice":
        _, dpos, prob, alias, radius = plan
        codes = kern.lattice_endpoints(dpos, prob, alias, n, n_walks, master_seed, radius)
    else:
        _, d, q, dpos, lptr, lsite, lval, prob, alias, radius = plan
        codes = kern.wreath_endpoints(d, q, dpos, lptr, lsite, lval, prob, alias, n, n_walks,
                                      master_seed, radius)
    values, counts = np.unique(codes, return_counts=True)
    return {_decode_endpoint(desc, int(v), radius): int(c) for v, c in zip(values, counts)}


@dataclass
class CrosscheckRow:
    n: int
    element: object
    exact: Fraction
    empirical: float
    z: float
    ok: bool


def crosscheck_power(mu, n_max, n_walks, master_seed=0, min_mass=Fraction(1, 1000), sigmas=4.0,
                     backend=None):
    """Compare exact mu^{*n} with Monte Carlo endpoint frequencies for n = 0..n_max.

    Returns (rows, stray, sums): one row per atom of mass >= ``min_mass``;
    ``stray`` lists elements hit by Monte Carlo that lie outside the exact
    support; ``sums`` holds the exact total mass of each power.
    """
    rows, stray, sums = [], [], []
    for n, p in enumerate(exact_power(mu, n_max)):
        sums.append(p.total_mass())
        seed = mix64(master_seed ^ (n + 1))
        freq = mc_endpoint_frequencies(mu, n, n_walks, seed, backend)
        exact = p.as_dict()
        for g in freq:
            if g not in exact:
                stray.append((n, g))
        for g, w in p.atoms:
            if w < min_mass:
                continue
            emp = freq.get(g, 0) / n_walks
            pw = float(w)
            sd = math.sqrt(pw * (1 - pw) / n_walks)
            z = (emp - pw) / sd if sd > 0 else (0.0 if emp == pw else math.inf)
            rows.append(CrosscheckRow(n, g, w, emp, z, abs(z) <= sigmas))
    return rows, stray, sums
