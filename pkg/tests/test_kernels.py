"""The compiled and pure-Python kernels must agree bit for bit."""

import math

import numpy as np
import pytest

from conftest import needs_cython
from walklab import kernels
from walklab.engine import WalkConfig, ak_schedule, run_trajectory
from walklab.green import mc_endpoint_frequencies
from walklab.groups import Lattice, LatticeElement, Wreath, sol, wreath_element
from walklab.measures import lamplighter_mu, lamplighter_nu, polycyclic_mu, polycyclic_nu, srw_lattice
from walklab.observables import PolycyclicS, WreathS, compute_eigendata

pytestmark = needs_cython

FIELDS = ("pred_windows", "pred_horizons", "pred_last", "targ_windows", "targ_horizons", "targ_last", "u_flags")


def same_stats(a, b):
    for f in FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f)), f
    assert np.array_equal(a.series, b.series, equal_nan=True)
    assert a.ak_events == b.ak_events
    assert a.final == b.final


def both(cfg_factory, n):
    py = cfg_factory("python")
    cy = cfg_factory("cython")
    for i in range(n):
        same_stats(run_trajectory(py, i), run_trajectory(cy, i))


@pytest.mark.parametrize("desc", [Wreath(1, 2), Wreath(2, 3), Wreath(1, None), Wreath(3, 2)], ids=repr)
@pytest.mark.parametrize("which", ["mu", "nu"])
def test_wreath_kernels_agree(desc, which):
    mu = lamplighter_mu(desc) if which == "mu" else lamplighter_nu(desc)
    d = desc.d
    origin = (0,) * d
    targets = [wreath_element(desc, {}, origin), wreath_element(desc, {origin: 1}, (1,) + (0,) * (d - 1))]

    def make(be):
        return WalkConfig(desc, mu, 2500, 3, 42, predicates=[WreathS(0.2), WreathS(0.05)], targets=targets,
                          horizons=[0, 7, 100, 2500], ak_schedule=ak_schedule(64), window_count=7,
                          snapshots=100, backend=be)

    both(make, 3)


@pytest.mark.parametrize("which", ["mu", "nu"])
def test_polycyclic_kernels_agree(which):
    desc = sol()
    eig = compute_eigendata(desc)
    mu = polycyclic_mu(desc) if which == "mu" else polycyclic_nu(desc, 8)

    def make(be):
        return WalkConfig(desc, mu, 4000, 3, 5, predicates=[PolycyclicS(c, eig) for c in (1, 2, 4)],
                          horizons=[10, 4000], window_count=5, backend=be)

    both(make, 3)


def test_lattice_kernels_agree():
    desc = Lattice(3)

    def make(be):
        return WalkConfig(desc, srw_lattice(3), 5000, 4, 9, targets=[LatticeElement((0, 0, 0)), LatticeElement((1, 0, 0))],
                          horizons=[1, 50, 5000], backend=be)

    both(make, 4)


@pytest.mark.parametrize("mu", [srw_lattice(2), lamplighter_mu(Wreath(1, 2)), lamplighter_nu(Wreath(1, 3), 2)],
                         ids=repr)
def test_endpoint_kernels_agree(mu):
    a = mc_endpoint_frequencies(mu, 4, 3000, 17, backend="python")
    b = mc_endpoint_frequencies(mu, 4, 3000, 17, backend="cython")
    assert a == b
    assert sum(a.values()) == 3000


def test_backend_selection():
    assert kernels.backend.IMPLEMENTATION in ("python", "cython")
    assert kernels.load("python").IMPLEMENTATION == "python"
    assert kernels.load("cython").IMPLEMENTATION == "cython"
    assert "python" in kernels.available()


def test_polycyclic_ip_tracking_survives_huge_phi():
    # long nu walks drive phi to hundreds; the scaled float must not overflow
    desc = sol()
    eig = compute_eigendata(desc)
    cfg = WalkConfig(desc, polycyclic_nu(desc, 8), 200_000, 1, 3, predicates=[PolycyclicS(2, eig)],
                     backend="cython")
    st = run_trajectory(cfg, 0)
    assert math.isfinite(st.final["final_logip"]) or st.final["final_logip"] == -math.inf
    assert st.final["final_max"] >= st.final["final_phi"]
