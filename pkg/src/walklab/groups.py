"""Exact arithmetic in Z^d, lamplighter groups H wr Z^d and Z^m semidirect Z^d.

Conventions
-----------
Wreath products multiply as ``(F, x)(G, z) = (F + shift_x G, x + z)`` with
``(shift_x G)(i) = G(i - x)``: right-multiplying by a generator whose lamps
sit at site 0 changes the lamp under the walker.

Polycyclic products multiply as ``(k, x)(l, y) = (k + l, x + Psi_k y)`` where
``Psi_k = M_1^k_1 ... M_m^k_m`` for the commuting action matrices ``M_i``.

All coordinates are Python ints, so polycyclic x-parts never overflow.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "GroupError",
    "Lattice",
    "Wreath",
    "Polycyclic",
    "LatticeElement",
    "WreathElement",
    "PolycyclicElement",
    "identity",
    "multiply",
    "inverse",
    "apply_action",
    "canonical_key",
    "decode_key",
    "wreath_element",
    "random_element",
    "descriptor_to_dict",
    "descriptor_from_dict",
]

KEY_VERSION = 1
_TAG = {"lattice": 1, "wreath": 2, "polycyclic": 3}
EIGEN_TOL = 1e-9


class GroupError(ValueError):
    """Structural misuse: malformed descriptor or element/descriptor mismatch."""


# ---------------------------------------------------------------------------
# integer linear algebra


def _matmul(a, b):
    n, p = len(a), len(b[0])
    return tuple(
        tuple(sum(a[i][r] * b[r][j] for r in range(len(b))) for j in range(p)) for i in range(n)
    )


def _matvec(a, v):
    return tuple(sum(row[j] * v[j] for j in range(len(v))) for row in a)


def _eye(d):
    return tuple(tuple(int(i == j) for j in range(d)) for i in range(d))


def int_det(a):
    """Fraction-free (Bareiss) determinant of a square integer matrix."""
    m = [list(row) for row in a]
    n = len(m)
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def int_inverse_unimodular(a):
    """Exact inverse of an integer matrix with determinant +-1 (adjugate)."""
    n = len(a)
    det = int_det(a)
    if det not in (1, -1):
        raise GroupError(f"matrix {a} has determinant {det}, not +-1")
    if n == 1:
        return ((det,),)
    cof = []
    for i in range(n):
        row = []
        for j in range(n):
            minor = [r[:j] + r[j + 1 :] for k, r in enumerate(a) if k != i]
            row.append((-1) ** (i + j) * int_det(minor))
        cof.append(row)
    return tuple(tuple(cof[j][i] * det for j in range(n)) for i in range(n))


def _matpow(a, e):
    result = _eye(len(a))
    base = a
    while e:
        if e & 1:
            result = _matmul(result, base)
        base = _matmul(base, base)
        e >>= 1
    return result


# ---------------------------------------------------------------------------
# descriptors


@dataclass(frozen=True)
class Lattice:
    d: int

    family = "lattice"

    def __post_init__(self):
        if self.d < 1:
            raise GroupError(f"lattice dimension must be >= 1, got {self.d}")


@dataclass(frozen=True)
class Wreath:
    """Lamplighter group H wr Z^d; ``lamp_modulus=None`` means H = Z."""

    d: int = 1
    lamp_modulus: int | None = 2

    family = "wreath"

    def __post_init__(self):
        if self.d < 1:
            raise GroupError(f"wreath base dimension must be >= 1, got {self.d}")
        if self.lamp_modulus is not None and self.lamp_modulus < 2:
            raise GroupError(f"cyclic lamp group needs q >= 2, got {self.lamp_modulus}")


@dataclass(frozen=True)
class Polycyclic:
    """Z^m acting on Z^d through m commuting unimodular matrices."""

    matrices: tuple
    inverses: tuple = field(init=False, repr=False, compare=False)

    family = "polycyclic"

    def __post_init__(self):
        mats = tuple(tuple(tuple(int(v) for v in row) for row in mat) for mat in self.matrices)
        if not mats:
            raise GroupError("polycyclic descriptor needs m >= 1 matrices")
        d = len(mats[0])
        if d < 1:
            raise GroupError("polycyclic descriptor needs d >= 1")
        for mat in mats:
            if len(mat) != d or any(len(row) != d for row in mat):
                raise GroupError(f"action matrices must all be {d}x{d}")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "inverses", tuple(int_inverse_unimodular(a) for a in mats))
        for i, a in enumerate(mats):
            for j in range(i + 1, len(mats)):
                b = mats[j]
                if _matmul(a, b) != _matmul(b, a):
                    raise GroupError(f"action matrices {i} and {j} do not commute")
        for i, a in enumerate(mats):
            ev = np.linalg.eigvals(np.array(a, dtype=float))
            scale = max(1.0, float(np.max(np.abs(ev))))
            if np.any(np.abs(ev.imag) > EIGEN_TOL * scale):
                raise GroupError(f"action matrix {i} has non-real eigenvalues {ev}")
            if np.any(ev.real <= EIGEN_TOL):
                raise GroupError(f"action matrix {i} has non-positive eigenvalues {ev.real}")

    @property
    def m(self):
        return len(self.matrices)

    @property
    def d(self):
        return len(self.matrices[0])

    def power(self, i, e):
        return _cached_power(self, i, e)


@lru_cache(maxsize=4096)
def _cached_power(desc, i, e):
    if e >= 0:
        return _matpow(desc.matrices[i], e)
    return _matpow(desc.inverses[i], -e)


def sol():
    """The Sol lattice Z semidirect Z^2 with action [[2, 1], [1, 1]]."""
    return Polycyclic((((2, 1), (1, 1)),))


# ---------------------------------------------------------------------------
# elements


@dataclass(frozen=True)
class LatticeElement:
    x: tuple


@dataclass(frozen=True)
class WreathElement:
    """Lamp configuration as a site-sorted tuple of ``(site, value)``; no identity values."""

    lamps: tuple
    pos: tuple

    def __post_init__(self):
        prev = None
        for site, value in self.lamps:
            if value == 0:
                raise GroupError(f"lamp at {site} stores the identity")
            if prev is not None and not prev < site:
                raise GroupError("lamp sites must be strictly increasing")
            prev = site

    def lamp_dict(self):
        return dict(self.lamps)


@dataclass(frozen=True)
class PolycyclicElement:
    k: tuple
    x: tuple


def _reduce_lamp(desc, value):
    q = desc.lamp_modulus
    return value % q if q is not None else value


def wreath_element(desc, lamps, pos):
    """Build a canonical wreath element from any mapping ``site -> value``."""
    items = lamps.items() if hasattr(lamps, "items") else lamps
    clean = {}
    for site, value in items:
        site = tuple(int(s) for s in site) if not isinstance(site, int) else (int(site),)
        if len(site) != desc.d:
            raise GroupError(f"lamp site {site} is not in Z^{desc.d}")
        v = _reduce_lamp(desc, clean.get(site, 0) + int(value))
        if v:
            clean[site] = v
        else:
            clean.pop(site, None)
    pos = (int(pos),) if isinstance(pos, int) else tuple(int(p) for p in pos)
    if len(pos) != desc.d:
        raise GroupError(f"position {pos} is not in Z^{desc.d}")
    return WreathElement(tuple(sorted(clean.items())), pos)


def identity(desc):
    if desc.family == "lattice":
        return LatticeElement((0,) * desc.d)
    if desc.family == "wreath":
        return WreathElement((), (0,) * desc.d)
    return PolycyclicElement((0,) * desc.m, (0,) * desc.d)


def _check(desc, a):
    fam = desc.family
    if fam == "lattice":
        ok = isinstance(a, LatticeElement) and len(a.x) == desc.d
    elif fam == "wreath":
        ok = isinstance(a, WreathElement) and len(a.pos) == desc.d
    else:
        ok = isinstance(a, PolycyclicElement) and len(a.k) == desc.m and len(a.x) == desc.d
    if not ok:
        raise GroupError(f"{a!r} does not belong to {desc!r}")


def _add(u, v):
    return tuple(p + q for p, q in zip(u, v))


def apply_action(desc, k, y):
    """Psi_k(y) = M_1^k_1 ... M_m^k_m y in exact integers."""
    if getattr(desc, "family", None) != "polycyclic":
        raise GroupError("apply_action needs a polycyclic descriptor")
    y = tuple(y)
    for i in range(desc.m - 1, -1, -1):
        if k[i]:
            y = _matvec(desc.power(i, k[i]), y)
    return y


def multiply(desc, a, b):
    _check(desc, a)
    _check(desc, b)
    fam = desc.family
    if fam == "lattice":
        return LatticeElement(_add(a.x, b.x))
    if fam == "polycyclic":
        return PolycyclicElement(_add(a.k, b.k), _add(a.x, apply_action(desc, a.k, b.x)))
    if not b.lamps:
        return WreathElement(a.lamps, _add(a.pos, b.pos))
    lamps = dict(a.lamps)
    q = desc.lamp_modulus
    x = a.pos
    for site, value in b.lamps:
        t = _add(site, x)
        v = lamps.get(t, 0) + value
        if q is not None:
            v %= q
        if v:
            lamps[t] = v
        else:
            del lamps[t]
    return WreathElement(tuple(sorted(lamps.items())), _add(a.pos, b.pos))


def inverse(desc, a):
    _check(desc, a)
    fam = desc.family
    if fam == "lattice":
        return LatticeElement(tuple(-v for v in a.x))
    if fam == "polycyclic":
        negk = tuple(-v for v in a.k)
        return PolycyclicElement(negk, tuple(-v for v in apply_action(desc, negk, a.x)))
    q = desc.lamp_modulus
    x = a.pos
    lamps = []
    for site, value in a.lamps:
        v = (-value) % q if q is not None else -value
        lamps.append((tuple(s - p for s, p in zip(site, x)), v))
    return WreathElement(tuple(lamps), tuple(-v for v in x))


# ---------------------------------------------------------------------------
# canonical byte encoding
#
#   byte    version (currently 1)
#   byte    family tag: 1 lattice, 2 wreath, 3 polycyclic
#   varints dimensions: lattice d | wreath d, q (0 for Z) | polycyclic m, d
#   lattice:    d zigzag coordinates
#   wreath:     d zigzag position coordinates, varint lamp count,
#               then per lamp (sites in lexicographic order) d zigzag site
#               coordinates and one zigzag value
#   polycyclic: m zigzag k coordinates, d zigzag x coordinates


def _varint(n, out):
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def _zigzag(v, out):
    _varint(2 * v if v >= 0 else -2 * v - 1, out)


def canonical_key(desc, a):
    _check(desc, a)
    out = bytearray((KEY_VERSION, _TAG[desc.family]))
    fam = desc.family
    if fam == "lattice":
        _varint(desc.d, out)
        for v in a.x:
            _zigzag(v, out)
    elif fam == "wreath":
        _varint(desc.d, out)
        _varint(desc.lamp_modulus or 0, out)
        for v in a.pos:
            _zigzag(v, out)
        _varint(len(a.lamps), out)
        for site, value in a.lamps:
            for s in site:
                _zigzag(s, out)
            _zigzag(value, out)
    else:
        _varint(desc.m, out)
        _varint(desc.d, out)
        for v in a.k:
            _zigzag(v, out)
        for v in a.x:
            _zigzag(v, out)
    return bytes(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.i = 0

    def varint(self):
        shift = n = 0
        while True:
            b = self.data[self.i]
            self.i += 1
            n |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                return n

    def zigzag(self):
        n = self.varint()
        return n >> 1 if not n & 1 else -((n + 1) >> 1)

    def many(self, count):
        return tuple(self.zigzag() for _ in range(count))


def decode_key(desc, key):
    """Inverse of :func:`canonical_key`."""
    r = _Reader(bytes(key))
    version, tag = r.data[0], r.data[1]
    r.i = 2
    if version != KEY_VERSION or tag != _TAG[desc.family]:
        raise GroupError(f"key version/tag {version}/{tag} does not match {desc!r}")
    fam = desc.family
    if fam == "lattice":
        if r.varint() != desc.d:
            raise GroupError("key dimension mismatch")
        return LatticeElement(r.many(desc.d))
    if fam == "wreath":
        if r.varint() != desc.d or r.varint() != (desc.lamp_modulus or 0):
            raise GroupError("key dimension mismatch")
        pos = r.many(desc.d)
        lamps = tuple((r.many(desc.d), r.zigzag()) for _ in range(r.varint()))
        return WreathElement(lamps, pos)
    if r.varint() != desc.m or r.varint() != desc.d:
        raise GroupError("key dimension mismatch")
    k = r.many(desc.m)
    return PolycyclicElement(k, r.many(desc.d))


# ---------------------------------------------------------------------------
# helpers


def random_element(desc, rng: random.Random, radius=3):
    """A random element with small coordinates, used by property tests."""

    def vec(n, r=radius):
        return tuple(rng.randint(-r, r) for _ in range(n))

    fam = desc.family
    if fam == "lattice":
        return LatticeElement(vec(desc.d))
    if fam == "polycyclic":
        return PolycyclicElement(vec(desc.m), vec(desc.d))
    q = desc.lamp_modulus
    lamps = {}
    for _ in range(rng.randint(0, 2 * radius)):
        lamps[vec(desc.d)] = rng.randint(1, q - 1) if q else rng.choice([-2, -1, 1, 2])
    return wreath_element(desc, lamps, vec(desc.d))


def descriptor_to_dict(desc):
    if desc.family == "lattice":
        return {"family": "lattice", "d": desc.d}
    if desc.family == "wreath":
        return {"family": "wreath", "d": desc.d, "lamp_modulus": desc.lamp_modulus}
    return {"family": "polycyclic", "matrices": [[list(r) for r in m] for m in desc.matrices]}


def descriptor_from_dict(data):
    fam = data.get("family")
    if fam == "lattice":
        return Lattice(int(data["d"]))
    if fam == "wreath":
        q = data.get("lamp_modulus", 2)
        return Wreath(int(data.get("d", 1)), None if q in (None, 0) else int(q))
    if fam == "polycyclic":
        return Polycyclic(tuple(tuple(tuple(r) for r in m) for m in data["matrices"]))
    raise GroupError(f"unknown group family {fam!r}")


def as_vector(v: Sequence[int] | int):
    return (int(v),) if isinstance(v, int) else tuple(int(c) for c in v)
