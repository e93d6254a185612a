"""Random walks on lamplighter and polycyclic groups.

Exact group and measure arithmetic, Monte Carlo walk ensembles with compiled
kernels, Green's function estimates and the recurrence-instability
experiments built on them.
"""

from .groups import (
    GroupError,
    Lattice,
    LatticeElement,
    Polycyclic,
    PolycyclicElement,
    Wreath,
    WreathElement,
    apply_action,
    canonical_key,
    identity,
    inverse,
    multiply,
    sol,
    wreath_element,
)
from .kernels import IMPLEMENTATION
from .measures import (
    Measure,
    convolve,
    lamplighter_mu,
    lamplighter_nu,
    polycyclic_mu,
    polycyclic_nu,
    sample,
    srw_lattice,
    symmetrize,
    validate,
)
from .observables import PolycyclicS, WreathS, compute_eigendata, contains, f_r, ip_v1, phi

__version__ = "0.1.0"

__all__ = [
    "GroupError",
    "IMPLEMENTATION",
    "Lattice",
    "LatticeElement",
    "Measure",
    "Polycyclic",
    "PolycyclicElement",
    "PolycyclicS",
    "Wreath",
    "WreathElement",
    "WreathS",
    "apply_action",
    "canonical_key",
    "compute_eigendata",
    "contains",
    "convolve",
    "f_r",
    "identity",
    "inverse",
    "ip_v1",
    "lamplighter_mu",
    "lamplighter_nu",
    "multiply",
    "phi",
    "polycyclic_mu",
    "polycyclic_nu",
    "sample",
    "sol",
    "srw_lattice",
    "symmetrize",
    "validate",
    "wreath_element",
]
