"""Compiled vs pure-Python walk kernels: throughput and output equality.

    python benchmarks/bench_kernels.py [--steps N] [--repeat R]
"""

import argparse
import time

import numpy as np

from walklab import kernels
from walklab.engine import WalkConfig, ak_schedule, run_trajectory
from walklab.groups import Lattice, Wreath, identity, sol
from walklab.measures import lamplighter_nu, polycyclic_nu, srw_lattice
from walklab.observables import PolycyclicS, WreathS, compute_eigendata


def cases(steps):
    z3 = Lattice(3)
    w = Wreath(1, 2)
    g = sol()
    eig = compute_eigendata(g)
    return {
        "lattice Z^3": lambda be: WalkConfig(z3, srw_lattice(3), steps, 1, 1, targets=[identity(z3)],
                                             horizons=[steps], backend=be),
        "lamplighter nu": lambda be: WalkConfig(w, lamplighter_nu(w), steps, 1, 1, predicates=[WreathS(0.2)],
                                                horizons=[steps], ak_schedule=ak_schedule(256), backend=be),
        "sol nu(beta=4)": lambda be: WalkConfig(g, polycyclic_nu(g, 4), steps, 1, 1,
                                                predicates=[PolycyclicS(c, eig) for c in (2, 4, 8)],
                                                horizons=[steps], backend=be),
    }


def timed(cfg, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = run_trajectory(cfg, 0)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available()
    print(f"backends: {', '.join(backends)}; {args.steps} steps, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{b + ' Msteps/s':>20}" for b in backends) + f"{'speedup':>10}{'equal':>8}")
    for name, make in cases(args.steps).items():
        rates, outs = [], []
        for be in backends:
            secs, out = timed(make(be), args.repeat if be != "python" else 1)
            rates.append(args.steps / secs / 1e6)
            outs.append(out)
        speed = f"{rates[-1] / rates[0]:.0f}x" if len(rates) > 1 else "-"
        same = all(
            np.array_equal(outs[0].pred_windows, o.pred_windows)
            and np.array_equal(outs[0].targ_windows, o.targ_windows)
            and np.array_equal(outs[0].series, o.series, equal_nan=True)
            and outs[0].final == o.final
            for o in outs[1:]
        )
        print(f"{name:<18}" + "".join(f"{r:>20.3f}" for r in rates) + f"{speed:>10}{str(same):>8}")


if __name__ == "__main__":
    main()
