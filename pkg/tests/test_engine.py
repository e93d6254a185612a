import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walklab.engine import (
    AkEvent,
    TrajectoryError,
    WalkConfig,
    ak_level,
    ak_schedule,
    detect_A_k,
    detect_U_n,
    reference_walk,
    run_ensemble,
    run_trajectory,
    t_k,
    tail_statistic,
)
from walklab.groups import GroupError, Lattice, LatticeElement, Wreath, identity, sol, wreath_element
from walklab.measures import lamplighter_mu, lamplighter_nu, polycyclic_mu, polycyclic_nu, srw_lattice
from walklab.observables import PolycyclicS, WreathS, compute_eigendata, f_r, log_abs_ip, phi

Z2Z = Wreath(1, 2)
SOL = sol()


def exact_wreath_trace(cfg, index):
    """Full-resolution (pos_1, F_R, M) along the exact reference walk."""
    rows, mx = [], 0
    for _, _, g in reference_walk(cfg, index):
        mx = max(mx, g.pos[0])
        rows.append((g.pos[0], f_r(g), mx, g))
    return rows


@pytest.mark.parametrize("which", ["mu", "nu"])
def test_wreath_kernel_matches_exact_reference_walk(which):
    mu = lamplighter_mu(Z2Z) if which == "mu" else lamplighter_nu(Z2Z)
    S = [WreathS(0.2), WreathS(0.02)]
    targets = [identity(Z2Z), wreath_element(Z2Z, {0: 1}, 1), wreath_element(Z2Z, {}, 8)]
    n = 3000
    cfg = WalkConfig(Z2Z, mu, n, 3, 77, predicates=S, targets=targets, horizons=[0, 10, 999, n],
                     ak_schedule=ak_schedule(64), window_count=6, snapshots=300)
    for i in range(3):
        stats = run_trajectory(cfg, i)
        trace = exact_wreath_trace(cfg, i)
        for p, pred in enumerate(S):
            wins = [0] * 6
            last = -1
            for t, (x, fr, _, _) in enumerate(trace):
                if x >= 1 and x - fr >= pred.coefficient * math.log(x):
                    wins[cfg.window_of(t)] += 1
                    last = t
            assert stats.pred_windows[p].tolist() == wins
            assert stats.pred_last[p] == last
        for j, g in enumerate(targets):
            hits = [t for t, row in enumerate(trace) if row[3] == g]
            assert stats.targ_horizons[j].tolist() == [sum(1 for t in hits if t <= h) for h in cfg.horizons]
            assert stats.targ_last[j] == (hits[-1] if hits else -1)
        snap = cfg.snap_every
        expect = np.array([trace[t][:3] for t in range(0, n + 1, snap)], dtype=float)
        assert np.array_equal(stats.series, expect)
        for p, pred in enumerate(S):
            times, _ = detect_U_n(stats.series, pred, snap)
            assert [s * snap for s in np.nonzero(stats.u_flags[p])[0]] == times
        assert stats.ak_events == detect_A_k([r[0] for r in trace], cfg.ak_schedule, cfg.jump)
        assert stats.final["final_fr"] == trace[-1][1]


def test_polycyclic_kernel_matches_exact_reference_walk():
    eig = compute_eigendata(SOL)
    preds = [PolycyclicS(c, eig) for c in (1.0, 2.0)]
    n = 600
    for mu in (polycyclic_mu(SOL), polycyclic_nu(SOL, 4)):
        cfg = WalkConfig(SOL, mu, n, 2, 3, predicates=preds, horizons=[n], window_count=4, snapshots=n)
        for i in range(2):
            stats = run_trajectory(cfg, i)
            mx = -math.inf
            rows, wins = [], np.zeros((2, 4), dtype=int)
            for t, _, g in reference_walk(cfg, i):
                ph = phi(g, eig)
                lip = log_abs_ip(g.x, eig, SOL)
                mx = max(mx, ph)
                rows.append((ph, lip, mx))
                for p, S in enumerate(preds):
                    if ph > 1 and ph - lip >= S.C * math.log(ph):
                        wins[p, cfg.window_of(t)] += 1
            got = stats.series
            exp = np.array(rows)
            assert np.allclose(got[:, 0], exp[:, 0], rtol=1e-12, atol=1e-9)
            assert np.allclose(got[:, 2], exp[:, 2], rtol=1e-12, atol=1e-9)
            finite = np.isfinite(exp[:, 1])
            assert np.array_equal(finite, np.isfinite(got[:, 1]))
            assert np.allclose(got[finite, 1], exp[finite, 1], rtol=0, atol=1e-8)
            assert stats.pred_windows.tolist() == wins.tolist()


def test_zero_steps():
    S = WreathS(0.2)
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 0, 1, 0, predicates=[S], targets=[identity(Z2Z)], horizons=[0])
    st_ = run_trajectory(cfg, 0)
    assert st_.pred_totals.tolist() == [0]
    assert st_.targ_totals.tolist() == [1]
    assert st_.targ_horizons.tolist() == [[1]]


def test_lattice_run_is_bit_reproducible():
    cfg = WalkConfig(Lattice(1), srw_lattice(1), 10, 2, 1234, targets=[LatticeElement((0,))], snapshots=10)
    a, b = run_trajectory(cfg, 1), run_trajectory(cfg, 1)
    assert np.array_equal(a.series, b.series)
    assert a.final == b.final
    steps = np.diff(a.series[:, 0])
    assert set(np.abs(steps).tolist()) == {1.0}


def test_running_max_dominates_position():
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 10_000, 3, 5)
    for i in range(3):
        s = run_trajectory(cfg, i).series
        assert np.all(s[:, 2] >= s[:, 0])
        assert np.all(np.diff(s[:, 2]) >= 0)
        assert np.all(np.abs(s[:, 0]) <= 10_000)


def test_windows_partition_with_remainder():
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 103, 1, 0, predicates=[WreathS(0.01)], window_count=5)
    assert cfg.window_block == 20
    assert [cfg.window_of(t) for t in (0, 19, 20, 79, 80, 103)] == [0, 0, 1, 3, 4, 4]


def test_ensemble_independent_of_threads():
    cfg = WalkConfig(Z2Z, lamplighter_nu(Z2Z), 5000, 24, 99, predicates=[WreathS(0.2)],
                     targets=[identity(Z2Z)], horizons=[100, 5000], ak_schedule=ak_schedule(64))
    a = run_ensemble(cfg, threads=1)
    b = run_ensemble(cfg, threads=4)
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(a.series_mean, b.series_mean, equal_nan=True)


def test_single_trajectory_ensemble_equals_stats():
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 4000, 1, 8, predicates=[WreathS(0.1)], horizons=[4000])
    rep = run_ensemble(cfg)
    st_ = run_trajectory(cfg, 0)
    assert rep.pred_window_sums == st_.pred_windows.tolist()
    assert rep.pred_horizon_sum[0][0] == st_.pred_horizons[0, 0]
    assert np.array_equal(rep.series_mean, st_.series)
    assert rep.conservation_ok


@settings(max_examples=15)
@given(st.integers(0, 2**64 - 1), st.integers(1, 3000), st.integers(1, 30))
def test_visit_conservation(seed, n, windows):
    cfg = WalkConfig(Z2Z, lamplighter_nu(Z2Z), n, 2, seed, predicates=[WreathS(0.1)], targets=[identity(Z2Z)],
                     horizons=[n], window_count=windows)
    for i in range(2):
        s = run_trajectory(cfg, i)
        assert s.pred_windows.sum() == s.pred_horizons[0, -1]
        assert s.targ_windows.sum() == s.targ_horizons[0, -1]
        assert (s.pred_windows >= 0).all()


def test_config_errors():
    mu = lamplighter_mu(Z2Z)
    eig = compute_eigendata(SOL)
    with pytest.raises(GroupError):
        WalkConfig(Z2Z, mu, 10, predicates=[PolycyclicS(2, eig)])
    with pytest.raises(GroupError):
        WalkConfig(SOL, polycyclic_mu(SOL), 10, targets=[identity(SOL)])
    with pytest.raises(GroupError):
        WalkConfig(SOL, mu, 10)
    with pytest.raises(ValueError):
        WalkConfig(Z2Z, mu, 10, horizons=[11])
    with pytest.raises(GroupError):
        WalkConfig(SOL, polycyclic_mu(SOL), 10, ak_schedule=[4])
    cfg = WalkConfig(Z2Z, mu, 10, 2)
    with pytest.raises(IndexError):
        run_trajectory(cfg, 2)


def test_trajectory_errors_carry_index(monkeypatch):
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 10, 6, 0)
    plan = cfg.plan()
    real = plan.run
    from walklab.rng import trajectory_seed

    bad = trajectory_seed(0, 3)

    def flaky(c, seed):
        if seed == bad:
            raise OverflowError("boom")
        return real(c, seed)

    monkeypatch.setattr(plan, "run", flaky)
    with pytest.raises(TrajectoryError) as info:
        run_ensemble(cfg)
    assert info.value.index == 3


def test_t_k_and_levels():
    assert [t_k(k) for k in (1, 3, 4, 15, 16, 63, 64, 256)] == [0, 0, 1, 1, 2, 2, 3, 4]
    assert [ak_level(k) for k in (1, 4, 5, 16, 17)] == [1, 2, 3, 4, 5]
    assert ak_schedule(20) == [1, 4, 16, 64, 256]


def test_detect_A_k_examples():
    # first reaching pos >= 4 at n=4, then +8 +8
    pos = [0, 1, 2, 3, 4, 12, 20, 21]
    ev = detect_A_k(pos, [1, 16])
    assert ev[0] == AkEvent(1, 0, 1, 1)
    assert ev[1] == AkEvent(16, 2, 4, 1)
    ev = detect_A_k([0, 1, 2, 3, 4, 12, 11], [16])
    assert ev[0].success == 0
    assert detect_A_k([0, 1, 0], [16])[0] == AkEvent(16, 2, -1, -1)
    assert detect_A_k([0, 1, 2, 3, 4, 12], [16])[0].success == -1


def test_detect_U_n_examples():
    S = WreathS(0.2)
    times, last = detect_U_n([(0, 0, 0), (1, 0, 1), (100, 0, 100)], S)
    assert times == [2] and last == 2
    # every lamp up to the maximum is lit: F_R = M_n
    times, last = detect_U_n([(100, 100, 100), (97, 99, 100)], S)
    assert times == [] and last == -1


def test_tail_statistic():
    cfg = WalkConfig(Z2Z, lamplighter_mu(Z2Z), 2000, 4, 0, predicates=[WreathS(0.39)])
    rep = run_ensemble(cfg)
    ts = tail_statistic(rep, WreathS(0.39))
    assert ts.first_half_visits + ts.second_half_visits == sum(rep.pred_window_sums[0])
    with pytest.raises(KeyError):
        tail_statistic(rep, WreathS(0.1))
    rep.pred_window_sums = [[0] * rep.window_count]
    ts = tail_statistic(rep, 0)
    assert ts.no_visits and ts.ratio == 0.0


def test_ak_frequency_under_nu():
    cfg = WalkConfig(Z2Z, lamplighter_nu(Z2Z), 2000, 4000, 3, ak_schedule=[4, 16])
    rep = run_ensemble(cfg)
    for k, t, reached, succ in zip(rep.ak_k, rep.ak_t, rep.ak_reached, rep.ak_success):
        p = 4.0**-t
        assert reached > 3900
        assert abs(succ / reached - p) <= 4 * math.sqrt(p * (1 - p) / reached)
