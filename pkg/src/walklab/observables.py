"""Functionals on group elements and the test sets they define.

For the lamplighter group the relevant quantity is the gap between the
walker and the rightmost lit lamp.  For polycyclic groups the walker's
"position" is the dilation exponent ``phi(k) = sum_i k_i log lambda_i1`` and
the lamp analogue is ``log |(x, v1)|`` where ``v1`` is the common dominant
left eigenvector of the action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .groups import GroupError, PolycyclicElement, WreathElement

EIG_RESIDUAL_TOL = 1e-8
EPS_MAX = 0.4


@dataclass(frozen=True)
class EigenData:
    """Dominant eigen-structure of a polycyclic action.

    ``eigenvalues[i][j]`` is the eigenvalue of generator ``i`` on common
    eigenvector ``j``; column 0 belongs to ``v1``.  ``dominant_generator`` is
    the generator index that realises ``lambda_11`` (the re-indexing step).
    """

    eigenvalues: tuple
    lambda_11: float
    log_lambda_11: float
    v1: tuple
    lam_v1: tuple
    log_lam_v1: tuple
    dominant_generator: int
    residuals: tuple

    @property
    def m(self):
        return len(self.lam_v1)

    @property
    def exponential_growth(self):
        return self.log_lambda_11 > 1e-12

    def to_dict(self):
        return {
            "eigenvalues": [list(r) for r in self.eigenvalues],
            "lambda_11": self.lambda_11,
            "log_lambda_11": self.log_lambda_11,
            "v1": list(self.v1),
            "lambda_i1": list(self.lam_v1),
            "dominant_generator": self.dominant_generator,
            "residual_norms": list(self.residuals),
        }


def _generic_combination(mats):
    # distinct weights make the common eigenvectors the only eigenvectors
    weights = [1.0 / (i + math.pi) for i in range(len(mats))]
    return sum(w * a.T for w, a in zip(weights, mats))


def compute_eigendata(desc):
    if getattr(desc, "family", None) != "polycyclic":
        raise GroupError("eigendata needs a polycyclic descriptor")
    mats = [np.array(a, dtype=float) for a in desc.matrices]
    d = desc.d
    if all(np.array_equal(a, np.eye(d)) for a in mats):
        v = np.ones(d) / math.sqrt(d)
        ones = tuple(tuple(1.0 for _ in range(d)) for _ in mats)
        return EigenData(ones, 1.0, 0.0, tuple(v), (1.0,) * len(mats), (0.0,) * len(mats), 0,
                         (0.0,) * len(mats))
    comb = _generic_combination(mats)
    w, vecs = np.linalg.eig(comb)
    if np.max(np.abs(vecs.imag)) > 1e-9 or np.max(np.abs(w.imag)) > 1e-9:
        raise GroupError("action has complex common eigenvectors")
    vecs = vecs.real
    if np.linalg.matrix_rank(vecs, tol=1e-9) < d:
        raise GroupError("action is not diagonalisable (defective eigenspace)")
    cols = [vecs[:, j] / np.linalg.norm(vecs[:, j]) for j in range(d)]
    lam = np.array([[float(c @ (a.T @ c)) for c in cols] for a in mats])
    if np.any(lam <= 1e-9):
        raise GroupError(f"non-positive eigenvalue in {lam}")
    i_star, j_star = np.unravel_index(int(np.argmax(lam)), lam.shape)
    order = [j_star] + [j for j in range(d) if j != j_star]
    v1 = cols[j_star]
    if v1[np.argmax(np.abs(v1))] < 0:
        v1 = -v1
    if np.any(v1 <= 0):
        raise GroupError(f"no sign choice makes every (e_j, v1) positive: v1 = {v1}")
    lam_v1 = [float(v1 @ (a.T @ v1)) for a in mats]
    residuals = [float(np.linalg.norm(a.T @ v1 - l * v1)) for a, l in zip(mats, lam_v1)]
    if max(residuals) > EIG_RESIDUAL_TOL * max(1.0, max(lam_v1)):
        raise GroupError(f"v1 is not a common eigenvector (residuals {residuals})")
    table = tuple(tuple(float(lam[i, j]) for j in order) for i in range(len(mats)))
    l11 = float(lam[i_star, j_star])
    return EigenData(
        eigenvalues=table,
        lambda_11=l11,
        log_lambda_11=math.log(l11),
        v1=tuple(float(c) for c in v1),
        lam_v1=tuple(lam_v1),
        log_lam_v1=tuple(math.log(v) for v in lam_v1),
        dominant_generator=int(i_star),
        residuals=tuple(residuals),
    )


@lru_cache(maxsize=32)
def v1_high_precision(desc, dps):
    """v1 to about ``dps`` decimal digits (mpmath eigensolver on the dominant generator)."""
    eig = compute_eigendata(desc)
    with mpmath.workdps(dps + 10):
        a = mpmath.matrix(desc.matrices[eig.dominant_generator]).T
        values, vectors = mpmath.eig(a)
        target = eig.lam_v1[eig.dominant_generator]
        j = min(range(desc.d), key=lambda i: abs(values[i] - target))
        v = [mpmath.re(vectors[r, j]) for r in range(desc.d)]
        norm = mpmath.sqrt(mpmath.fsum(c * c for c in v))
        sign = 1 if v[0] > 0 else -1
        return tuple(sign * c / norm for c in v)


def f_r(a):
    """Rightmost non-identity lamp (first coordinate), floored at 0."""
    if not isinstance(a, WreathElement):
        raise GroupError("F_R needs a wreath element")
    best = 0
    for site, _ in a.lamps:
        if site[0] > best:
            best = site[0]
    return best


def phi(a, eig):
    if not isinstance(a, PolycyclicElement):
        raise GroupError("phi needs a polycyclic element")
    total = 0.0
    for k, ll in zip(a.k, eig.log_lam_v1):
        total += k * ll
    return total


def ip_v1(x, eig):
    if len(x) != len(eig.v1):
        raise GroupError(f"vector of length {len(x)} against v1 of length {len(eig.v1)}")
    return math.fsum(float(a) * b for a, b in zip(x, eig.v1))


def log_abs_ip(x, eig, desc=None):
    """ln |(x, v1)| for an exact integer vector; -inf when it vanishes.

    Large vectors are evaluated in mpmath against a high-precision v1 because
    x can be huge along the contracting direction while (x, v1) is small.
    """
    big = max((abs(c) for c in x), default=0)
    if big < 2**20 or desc is None:
        val = ip_v1(x, eig)
        return math.log(abs(val)) if val else -math.inf
    # the result can be as small as 1/big, so cancellation eats twice the digits of x
    digits = int(big.bit_length() * 0.30103)
    dps = 50 * ((2 * digits + 40) // 50 + 1)
    v1 = v1_high_precision(desc, dps)
    with mpmath.workdps(dps):
        val = mpmath.fsum(mpmath.mpf(c) * b for c, b in zip(x, v1))
        if val == 0:
            return -math.inf
        return float(mpmath.log(abs(val)))


@dataclass(frozen=True)
class WreathS:
    """{(f, x): x_1 >= 1 and x_1 - F_R >= (2 + 5 eps) log2 x_1}."""

    eps: float

    def __post_init__(self):
        if not 0 < self.eps < EPS_MAX:
            raise ValueError(f"epsilon must lie in (0, {EPS_MAX}), got {self.eps}")

    @property
    def coefficient(self):
        return (2 + 5 * self.eps) / math.log(2)

    @property
    def label(self):
        return f"S(eps={self.eps:g})"


@dataclass(frozen=True)
class PolycyclicS:
    """{g: phi(g) > 1 and phi(g) - ln|(x, v1)| >= C ln phi(g)}."""

    C: float
    eig: EigenData

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")

    @property
    def label(self):
        return f"S(C={self.C:g})"


def wreath_in_set(coefficient, x1, fr):
    return x1 >= 1 and x1 - fr >= coefficient * math.log(x1)


def polycyclic_in_set(C, phi_value, log_ip):
    return phi_value > 1 and phi_value - log_ip >= C * math.log(phi_value)


def contains(S, a, desc=None):
    if isinstance(S, WreathS):
        if not isinstance(a, WreathElement):
            raise GroupError("S(eps) is a lamplighter set")
        return wreath_in_set(S.coefficient, a.pos[0], f_r(a))
    if isinstance(S, PolycyclicS):
        if not isinstance(a, PolycyclicElement):
            raise GroupError("S(C) is a polycyclic set")
        return polycyclic_in_set(S.C, phi(a, S.eig), log_abs_ip(a.x, S.eig, desc))
    raise TypeError(f"unknown set predicate {S!r}")
