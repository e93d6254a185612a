"""Command line entry point: ``walklab validate | run <experiment> | green``."""

from __future__ import annotations

import argparse
import os
import sys

from . import kernels
from .experiments import EXPERIMENTS, ConfigError, parse_config, run_experiment
from .groups import GroupError

DEFAULTS_HELP = (
    "defaults: group z2wrz (sol for polycyclic-instability, z3 for lattice-sanity), epsilon 0.2, "
    "C sweep 2,4,8, beta sweep 2,4,8, jump 8, steps 100000, trajectories 100, seed 0, threads 1, "
    "windows 20, formats csv,json"
)


def _add_common(p):
    p.add_argument("--config", help="JSON file mirroring the experiment spec; flags override it")
    p.add_argument("--group", help="z2wrz, z3wrz2, zzwrz, sol, sol2, polycyclic, z1, z2, z3")
    p.add_argument("--epsilon", type=float, help="epsilon of S(eps), in (0, 0.4); default 0.2")
    p.add_argument("--big-c", dest="big_c", help="C of S(C), comma list; default 2,4,8")
    p.add_argument("--beta", help="jump size of the polycyclic nu, comma list of integers >= 1; default 2,4,8")
    p.add_argument("--jump", type=int, help="lamplighter nu jump; default 8")
    p.add_argument("--steps", type=int, help="walk length; default 100000")
    p.add_argument("--trajectories", type=int, help="ensemble size; default 100")
    p.add_argument("--seed", type=int, help="master seed; default 0")
    p.add_argument("--threads", type=int, help="worker threads (env WALKLAB_THREADS); default 1")
    p.add_argument("--windows", type=int, help="number of time windows; default 20")
    p.add_argument("--horizons", help="comma list of Green horizons; default decades up to --steps")
    p.add_argument("--out", help="output directory; files go to <out>/<experiment>/")
    p.add_argument("--format", dest="formats", help="comma list of csv,json,svg; default csv,json")


def build_parser():
    parser = argparse.ArgumentParser(prog="walklab", description="Random walks on lamplighter and polycyclic groups.",
                                     epilog=DEFAULTS_HELP)
    parser.add_argument("--version", action="version", version=f"walklab (kernels: {kernels.IMPLEMENTATION})")
    sub = parser.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check the group, its measures and eigen-structure", epilog=DEFAULTS_HELP)
    _add_common(v)
    r = sub.add_parser("run", help="run a named experiment", epilog=DEFAULTS_HELP)
    r.add_argument("experiment", choices=[e for e in EXPERIMENTS if e != "green"])
    _add_common(r)
    g = sub.add_parser("green", help="Green's function estimates (Monte Carlo and exact)", epilog=DEFAULTS_HELP)
    _add_common(g)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    name = {"validate": "validate", "green": "green"}.get(args.command) or args.experiment
    threads = args.threads
    if threads is None and os.environ.get("WALKLAB_THREADS"):
        threads = os.environ["WALKLAB_THREADS"]
    overrides = {
        "name": name,
        "group": args.group,
        "epsilon": args.epsilon,
        "big_c": args.big_c,
        "beta": args.beta,
        "jump": args.jump,
        "steps": args.steps,
        "trajectories": args.trajectories,
        "seed": args.seed,
        "threads": threads,
        "windows": args.windows,
        "horizons": args.horizons,
        "out": args.out,
        "formats": args.formats,
    }
    try:
        spec = parse_config(args.config, overrides)
        result = run_experiment(spec)
    except (ConfigError, GroupError) as exc:
        print(f"walklab: error: {exc}", file=sys.stderr)
        return 2
    print(f"{result.name}  spec {result.spec_hash}  kernels {kernels.IMPLEMENTATION}")
    for c in result.checks:
        mark = "PASS" if c.passed else "FAIL"
        kind = "hard" if c.hard else "stat"
        print(f"  [{mark}] ({kind}) {c.name}" + (f"  {c.detail}" if c.detail else ""))
    for p in result.paths:
        print(f"  wrote {p}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
