import math
from fractions import Fraction

import pytest

from walklab.engine import WalkConfig, run_ensemble
from walklab.green import (
    PowerCapExceeded,
    crosscheck_power,
    exact_power,
    green_truncated_exact,
    mc_endpoint_frequencies,
    mc_green,
    ratio_series,
)
from walklab.groups import GroupError, Lattice, LatticeElement, Wreath, identity, inverse, sol, wreath_element
from walklab.measures import lamplighter_mu, lamplighter_nu, point_mass, srw_lattice
from walklab.observables import WreathS

Z2Z = Wreath(1, 2)
Z1 = Lattice(1)


def test_exact_power_basics():
    mu = lamplighter_mu(Z2Z)
    p = exact_power(mu, 3)
    assert p[0] == point_mass(Z2Z)
    assert p[1] == mu
    assert all(q.total_mass() == 1 for q in p)
    assert all(q.is_symmetric() for q in p)


def test_exact_power_cap_reports_progress():
    with pytest.raises(PowerCapExceeded) as info:
        exact_power(lamplighter_mu(Z2Z), 6, cap=200)
    assert info.value.n_reached >= 1


def test_green_truncated_exact_examples():
    srw = srw_lattice(1)
    origin = LatticeElement((0,))
    assert green_truncated_exact(srw, origin, 0) == 1
    assert green_truncated_exact(srw, origin, 4) == Fraction(15, 8)
    # binomial(2n, n) / 4^n summed over even times
    for n_max in range(0, 9):
        expect = sum(Fraction(math.comb(2 * n, n), 4**n) for n in range(n_max // 2 + 1))
        assert green_truncated_exact(srw, origin, n_max) == expect
    assert green_truncated_exact(srw, LatticeElement((5,)), 4) == 0


def test_green_monotone_in_horizon():
    mu = lamplighter_mu(Z2Z)
    g = wreath_element(Z2Z, {0: 1}, 1)
    vals = [green_truncated_exact(mu, g, n) for n in range(6)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[0] == 0 and vals[1] == Fraction(1, 8)


def test_mc_green_identity_at_zero_horizon():
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 100, 20, 0)
    est = mc_green(cfg, [identity(Z2Z)], horizons=[0, 100])
    assert est[0].horizon == 0 and est[0].visits_mean == 1.0 and est[0].visits_stderr == 0.0
    assert est[1].visits_mean >= 1.0 and est[1].truncated


def test_mc_green_family_mismatch():
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 10, 2, 0)
    with pytest.raises(GroupError):
        mc_green(cfg, [LatticeElement((0,))])


def test_mc_green_matches_exact_on_small_horizon():
    srw = srw_lattice(1)
    cfg = WalkConfig(Z1, srw, 8, 200_000, 5)
    est = mc_green(cfg, [LatticeElement((0,))])[0]
    exact = float(green_truncated_exact(srw, LatticeElement((0,)), 8))
    assert abs(est.visits_mean - exact) <= 4 * est.visits_stderr


def test_pointwise_symmetry_of_green_estimates():
    mu = lamplighter_mu(Z2Z)
    g = wreath_element(Z2Z, {0: 1, 1: 1}, 2)
    cfg = WalkConfig(Z2Z, mu, 30, 100_000, 12)
    a, b = mc_green(cfg, [g, inverse(Z2Z, g)])
    assert abs(a.visits_mean - b.visits_mean) <= 4 * math.hypot(a.visits_stderr, b.visits_stderr)


def test_ratio_series_identical_measures():
    S = WreathS(0.2)
    hs = [100, 1000, 5000]
    mu = lamplighter_mu(Z2Z)
    a = run_ensemble(WalkConfig(Z2Z, mu, 5000, 400, 1, predicates=[S], horizons=hs))
    b = run_ensemble(WalkConfig(Z2Z, mu, 5000, 400, 2, predicates=[S], horizons=hs))
    for row in ratio_series(a, b, S):
        assert not row.flagged
        assert abs(row.ratio - 1) <= 4 * row.ratio_se


def test_ratio_series_flags_zero_denominator():
    S = WreathS(0.2)
    mu = lamplighter_mu(Z2Z)
    a = run_ensemble(WalkConfig(Z2Z, mu, 50, 5, 1, predicates=[S], horizons=[0, 50]))
    rows = ratio_series(a, a, S)
    assert rows[0].flagged and math.isnan(rows[0].ratio)
    with pytest.raises(KeyError):
        ratio_series(a, a, WreathS(0.3))


def test_endpoint_frequencies_and_crosscheck():
    srw = srw_lattice(1)
    freq = mc_endpoint_frequencies(srw, 3, 1000, 0)
    assert sum(freq.values()) == 1000
    assert set(g.x[0] for g in freq) <= {-3, -1, 1, 3}
    rows, stray, sums = crosscheck_power(lamplighter_nu(Wreath(1, 3), 2), 3, 200_000, 4)
    assert not stray
    assert all(s == 1 for s in sums)
    assert all(r.ok for r in rows)


def test_endpoint_frequencies_reject_unsupported():
    with pytest.raises(GroupError):
        mc_endpoint_frequencies(lamplighter_mu(Wreath(1, None)), 2, 10)
    from walklab.measures import polycyclic_mu

    with pytest.raises(GroupError):
        mc_endpoint_frequencies(polycyclic_mu(sol()), 2, 10)
