"""Finitely supported probability measures with exact rational weights."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm

from .groups import (
    GroupError,
    LatticeElement,
    PolycyclicElement,
    canonical_key,
    decode_key,
    descriptor_from_dict,
    descriptor_to_dict,
    identity,
    inverse,
    multiply,
    wreath_element,
)

DEFAULT_SUPPORT_CAP = 10**7


class SupportCapExceeded(RuntimeError):
    """A convolution would produce more atoms than the configured cap."""


class AliasTable:
    """Walker/Vose alias table.

    The table is built with exact rationals and only the final acceptance
    thresholds are rounded to doubles.  A draw uses one 53-bit uniform ``u``:
    column ``c = floor(u*K)`` and the fractional part decides between ``c``
    and ``alias[c]``.
    """

    def __init__(self, weights):
        n = len(weights)
        scaled = [Fraction(w) * n for w in weights]
        alias = list(range(n))
        prob = [Fraction(1)] * n
        small = [i for i, s in enumerate(scaled) if s < 1]
        large = [i for i, s in enumerate(scaled) if s >= 1]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1
            if scaled[g] < 1:
                small.append(g)
            else:
                large.append(g)
        self.prob = [float(p) for p in prob]
        self.alias = alias

    def __len__(self):
        return len(self.alias)

    def draw(self, rng):
        x = rng.random() * len(self.alias)
        col = int(x)
        return col if x - col < self.prob[col] else self.alias[col]


class Measure:
    """Finitely supported measure; atoms kept in canonical-key order."""

    def __init__(self, desc, atoms, name=None):
        self.descriptor = desc
        self.name = name
        merged = {}
        for element, weight in (atoms.items() if hasattr(atoms, "items") else atoms):
            weight = Fraction(weight)
            key = canonical_key(desc, element)
            if key in merged:
                merged[key] = (element, merged[key][1] + weight)
            else:
                merged[key] = (element, weight)
        self._atoms = [merged[k] for k in sorted(merged)]
        self._sampler = None

    @property
    def atoms(self):
        return list(self._atoms)

    @property
    def elements(self):
        return [g for g, _ in self._atoms]

    @property
    def weights(self):
        return [w for _, w in self._atoms]

    def as_dict(self):
        return dict(self._atoms)

    def weight(self, g):
        return self.as_dict().get(g, Fraction(0))

    def total_mass(self):
        return sum(self.weights, Fraction(0))

    def __len__(self):
        return len(self._atoms)

    def __eq__(self, other):
        return (
            isinstance(other, Measure)
            and self.descriptor == other.descriptor
            and self._atoms == other._atoms
        )

    def __repr__(self):
        label = self.name or "Measure"
        return f"<{label}: {len(self)} atoms on {self.descriptor!r}>"

    @property
    def sampler(self):
        if self._sampler is None:
            self._sampler = AliasTable(self.weights)
        return self._sampler

    def is_symmetric(self):
        table = self.as_dict()
        desc = self.descriptor
        return all(table.get(inverse(desc, g)) == w for g, w in self._atoms)


def sample(mu, rng):
    return mu._atoms[mu.sampler.draw(rng)][0]


@dataclass
class ValidationReport:
    normalized: bool
    symmetric: bool
    positive: bool
    support: int
    total_mass: Fraction
    problems: list = field(default_factory=list)

    @property
    def ok(self):
        return self.normalized and self.symmetric and self.positive

    def to_dict(self):
        return {
            "normalized": self.normalized,
            "symmetric": self.symmetric,
            "positive": self.positive,
            "support": self.support,
            "total_mass": str(self.total_mass),
            "problems": list(self.problems),
        }


def validate(mu):
    desc = mu.descriptor
    table = mu.as_dict()
    problems = []
    positive = all(w > 0 for w in table.values())
    if not positive:
        problems.append("non-positive weight")
    total = mu.total_mass()
    if total != 1:
        problems.append(f"total mass {total} != 1")
    symmetric = True
    for g, w in table.items():
        gi = inverse(desc, g)
        if table.get(gi) != w:
            symmetric = False
            problems.append(f"atom {g} has weight {w} but its inverse has {table.get(gi, 0)}")
            break
    return ValidationReport(total == 1, symmetric, positive, len(table), total, problems)


def _common_denominator(mu):
    den = 1
    for w in mu.weights:
        den = lcm(den, w.denominator)
    return den, [(g, int(w * den)) for g, w in mu.atoms]


def convolve(mu, nu, cap=DEFAULT_SUPPORT_CAP):
    """(mu * nu)(g) = sum_h mu(h) nu(h^-1 g), i.e. the law of h h' with h ~ mu, h' ~ nu."""
    if mu.descriptor != nu.descriptor:
        raise GroupError("cannot convolve measures on different groups")
    desc = mu.descriptor
    den_a, left = _common_denominator(mu)
    den_b, right = _common_denominator(nu)
    acc = {}
    for g, a in left:
        for h, b in right:
            p = multiply(desc, g, h)
            acc[p] = acc.get(p, 0) + a * b
        if len(acc) > cap:
            raise SupportCapExceeded(f"convolution support exceeds cap of {cap} atoms")
    den = den_a * den_b
    return Measure(desc, {g: Fraction(n, den) for g, n in acc.items()})


def symmetrize(mu):
    desc = mu.descriptor
    out = {}
    for g, w in mu.atoms:
        half = w / 2
        gi = inverse(desc, g)
        out[g] = out.get(g, 0) + half
        out[gi] = out.get(gi, 0) + half
    return Measure(desc, out, name=mu.name)


def point_mass(desc, g=None):
    return Measure(desc, {identity(desc) if g is None else g: Fraction(1)}, name="delta")


def mixture(parts, name=None):
    """sum_i c_i mu_i for exact coefficients summing to 1."""
    desc = parts[0][1].descriptor
    out = {}
    for coef, mu in parts:
        for g, w in mu.atoms:
            out[g] = out.get(g, 0) + Fraction(coef) * w
    return Measure(desc, out, name=name)


# ---------------------------------------------------------------------------
# builders


def _require(desc, family):
    if getattr(desc, "family", None) != family:
        raise GroupError(f"builder needs a {family} descriptor, got {desc!r}")


def _unit(d, i, s=1):
    return tuple(s if j == i else 0 for j in range(d))


def srw_lattice(d):
    from .groups import Lattice

    desc = Lattice(d)
    w = Fraction(1, 2 * d)
    atoms = {LatticeElement(_unit(d, i, s)): w for i in range(d) for s in (1, -1)}
    return Measure(desc, atoms, name="srw")


def eta(desc):
    """Lazy randomisation of the lamp under the walker (holding probability 1/2)."""
    _require(desc, "wreath")
    zero = (0,) * desc.d
    q = desc.lamp_modulus
    atoms = {identity(desc): Fraction(1, 2)}
    if q is None:
        values = [1, -1]
    else:
        values = list(range(1, q))
    for v in values:
        atoms[wreath_element(desc, {zero: v}, zero)] = Fraction(1, 2 * len(values))
    return Measure(desc, atoms, name="eta")


def lambda_move(desc):
    """Lamp-preserving moves whose first coordinate is simple random walk.

    The first coordinate is +-1 with probability 1/2 each and every other
    coordinate is independently uniform on {-1, 0, 1}; for d = 1 this is
    plain simple random walk.
    """
    _require(desc, "wreath")
    from itertools import product

    rest = list(product((-1, 0, 1), repeat=desc.d - 1))
    w = Fraction(1, 2 * len(rest))
    atoms = {}
    for s in (1, -1):
        for tail in rest:
            atoms[wreath_element(desc, {}, (s,) + tail)] = w
    return Measure(desc, atoms, name="lambda")


def lamplighter_mu(desc):
    """Switch-walk-switch measure eta * lambda * eta.

    On Z_2 wr Z this is the explicit 8-atom measure: weight 1/8 on (f, x)
    with x = +-1 and f supported in {0, x}.
    """
    _require(desc, "wreath")
    if desc.d == 1 and desc.lamp_modulus == 2:
        atoms = {}
        for x in (1, -1):
            for f0 in (0, 1):
                for fx in (0, 1):
                    atoms[wreath_element(desc, {0: f0, x: fx}, x)] = Fraction(1, 8)
        return Measure(desc, atoms, name="mu")
    e = eta(desc)
    mu = convolve(convolve(e, lambda_move(desc)), e)
    mu.name = "mu"
    return mu


def lamplighter_nu(desc, jump=8):
    """Half mu, half a lamp-free jump of +-jump along the first axis."""
    _require(desc, "wreath")
    if jump < 1:
        raise ValueError("jump must be >= 1")
    mu = lamplighter_mu(desc)
    jumps = {
        wreath_element(desc, {}, _unit(desc.d, 0, jump)): Fraction(1, 2),
        wreath_element(desc, {}, _unit(desc.d, 0, -jump)): Fraction(1, 2),
    }
    return mixture([(Fraction(1, 2), mu), (Fraction(1, 2), Measure(desc, jumps))], name="nu")


def polycyclic_mu_raw(desc):
    _require(desc, "polycyclic")
    m, d = desc.m, desc.d
    zero = (0,) * d
    atoms = {}
    for i in range(m):
        for s in (1, -1):
            k = _unit(m, i, s)
            atoms[PolycyclicElement(k, zero)] = Fraction(1, 6 * m)
            for j in range(d):
                for t in (1, -1):
                    atoms[PolycyclicElement(k, _unit(d, j, t))] = Fraction(1, 6 * m * d)
    return Measure(desc, atoms, name="mu_raw")


def polycyclic_nu_raw(desc, beta):
    _require(desc, "polycyclic")
    if int(beta) != beta or beta < 1:
        raise ValueError(f"beta must be an integer >= 1, got {beta}")
    m, d = desc.m, desc.d
    jumps = {
        PolycyclicElement(_unit(m, i, s * beta), (0,) * d): Fraction(1, 2 * m)
        for i in range(m)
        for s in (1, -1)
    }
    return mixture(
        [(Fraction(1, 2), polycyclic_mu_raw(desc)), (Fraction(1, 2), Measure(desc, jumps))],
        name="nu_raw",
    )


def polycyclic_mu(desc, raw=False):
    mu = polycyclic_mu_raw(desc)
    if raw:
        return mu
    out = symmetrize(mu)
    out.name = "mu"
    return out


def polycyclic_nu(desc, beta, raw=False):
    nu = polycyclic_nu_raw(desc, beta)
    if raw:
        return nu
    out = symmetrize(nu)
    out.name = "nu"
    return out


# ---------------------------------------------------------------------------
# JSON


def measure_to_json(mu):
    doc = {
        "descriptor": descriptor_to_dict(mu.descriptor),
        "name": mu.name,
        "atoms": [
            [canonical_key(mu.descriptor, g).hex(), str(w.numerator), str(w.denominator)]
            for g, w in mu.atoms
        ],
    }
    return json.dumps(doc, sort_keys=True)


def measure_from_json(text):
    doc = json.loads(text)
    desc = descriptor_from_dict(doc["descriptor"])
    atoms = [
        (decode_key(desc, bytes.fromhex(k)), Fraction(int(n), int(dd))) for k, n, dd in doc["atoms"]
    ]
    return Measure(desc, atoms, name=doc.get("name"))
