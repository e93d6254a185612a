import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from walklab.groups import (
    GroupError,
    Lattice,
    LatticeElement,
    PolycyclicElement,
    Wreath,
    identity,
    inverse,
    multiply,
    random_element,
    sol,
    wreath_element,
)
from walklab.measures import (
    AliasTable,
    Measure,
    SupportCapExceeded,
    convolve,
    eta,
    lambda_move,
    lamplighter_mu,
    lamplighter_nu,
    measure_from_json,
    measure_to_json,
    mixture,
    point_mass,
    polycyclic_mu,
    polycyclic_mu_raw,
    polycyclic_nu,
    polycyclic_nu_raw,
    sample,
    srw_lattice,
    symmetrize,
    validate,
)
from walklab.rng import Xoshiro256

Z2Z = Wreath(1, 2)
SOL = sol()


def all_builders():
    out = [srw_lattice(1), srw_lattice(3)]
    for desc in (Wreath(1, 2), Wreath(2, 3), Wreath(1, None), Wreath(2, 2)):
        out += [eta(desc), lambda_move(desc), lamplighter_mu(desc), lamplighter_nu(desc)]
    sol2 = type(SOL)((((2, 1), (1, 1)), ((5, 3), (3, 2))))
    for desc in (SOL, sol2):
        out += [polycyclic_mu(desc), polycyclic_nu(desc, 1), polycyclic_nu(desc, 4)]
    return out


@pytest.mark.parametrize("mu", all_builders(), ids=repr)
def test_builders_are_normalized_and_symmetric(mu):
    rep = validate(mu)
    assert rep.normalized and rep.symmetric and rep.positive, rep.problems
    assert mu.total_mass() == 1


def test_lamplighter_mu_is_eight_atoms_of_one_eighth():
    mu = lamplighter_mu(Z2Z)
    assert len(mu) == 8
    assert set(mu.weights) == {Fraction(1, 8)}
    for g in mu.elements:
        assert g.pos[0] in (1, -1)
        assert {s[0] for s, _ in g.lamps} <= {0, g.pos[0]}
    rep = validate(mu)
    assert rep.support == 8 and rep.symmetric


def test_eta_lambda_eta_matches_explicit_measure():
    e = eta(Z2Z)
    composed = convolve(convolve(e, lambda_move(Z2Z)), e)
    assert composed == lamplighter_mu(Z2Z)
    assert convolve(e, convolve(lambda_move(Z2Z), e)) == composed


def test_lamplighter_nu_weights():
    nu = lamplighter_nu(Z2Z)
    assert nu.weight(wreath_element(Z2Z, {}, 8)) == Fraction(1, 4)
    assert nu.weight(wreath_element(Z2Z, {}, -8)) == Fraction(1, 4)
    assert all(w == Fraction(1, 16) for g, w in nu.atoms if abs(g.pos[0]) == 1)
    assert len(nu) == 10
    with pytest.raises(ValueError):
        lamplighter_nu(Z2Z, jump=0)


def test_lambda_move_projects_to_srw_on_first_coordinate():
    for desc in (Wreath(1, 2), Wreath(2, 2), Wreath(3, 3)):
        lam = lambda_move(desc)
        up = sum(w for g, w in lam.atoms if g.pos[0] == 1)
        down = sum(w for g, w in lam.atoms if g.pos[0] == -1)
        assert up == down == Fraction(1, 2)
        assert all(not g.lamps for g in lam.elements)


def test_polycyclic_raw_mu_formula_and_asymmetry():
    raw = polycyclic_mu_raw(SOL)
    assert len(raw) == 10
    assert sorted(raw.weights) == [Fraction(1, 12)] * 8 + [Fraction(1, 6)] * 2
    assert raw.total_mass() == 1
    assert not validate(raw).symmetric
    # (u_1, e_1)^-1 = (-u_1, -A^-1 e_1) = (-1, (-1, 1)) is not a raw atom
    g = PolycyclicElement((1,), (1, 0))
    assert inverse(SOL, g) == PolycyclicElement((-1,), (-1, 1))
    assert raw.weight(inverse(SOL, g)) == 0


def test_polycyclic_symmetrized_support_at_most_doubles():
    raw = polycyclic_mu_raw(SOL)
    mu = polycyclic_mu(SOL)
    assert validate(mu).symmetric
    assert len(mu) <= 2 * len(raw)
    assert len(mu) == 18
    for g, w in mu.atoms:
        assert w == (raw.weight(g) + raw.weight(inverse(SOL, g))) / 2


def test_polycyclic_nu_formula():
    raw = polycyclic_nu_raw(SOL, 4)
    assert raw.weight(PolycyclicElement((4,), (0, 0))) == Fraction(1, 4)
    assert raw.weight(PolycyclicElement((-4,), (0, 0))) == Fraction(1, 4)
    assert raw.weight(PolycyclicElement((1,), (0, 1))) == Fraction(1, 24)
    assert raw.total_mass() == 1
    nu = polycyclic_nu(SOL, 4)
    assert nu.weight(PolycyclicElement((4,), (0, 0))) == Fraction(1, 4)
    with pytest.raises(ValueError):
        polycyclic_nu(SOL, 0)
    with pytest.raises(ValueError):
        polycyclic_nu(SOL, 1.5)


def test_builder_family_mismatch():
    with pytest.raises(GroupError):
        lamplighter_mu(SOL)
    with pytest.raises(GroupError):
        polycyclic_mu(Z2Z)


def test_validate_detects_perturbed_weight():
    atoms = dict(lamplighter_mu(Z2Z).atoms)
    g = next(iter(atoms))
    atoms[g] += Fraction(1, 1000)
    rep = validate(Measure(Z2Z, atoms))
    assert not rep.normalized and not rep.ok


def test_mu_star_mu_at_identity_by_enumeration():
    mu = lamplighter_mu(Z2Z)
    e = identity(Z2Z)
    brute = sum(a * b for g, a in mu.atoms for h, b in mu.atoms if multiply(Z2Z, g, h) == e)
    assert convolve(mu, mu).weight(e) == brute == Fraction(1, 8)


def test_convolve_identity_and_cap():
    mu = lamplighter_mu(Z2Z)
    assert convolve(point_mass(Z2Z), mu) == mu
    assert convolve(mu, point_mass(Z2Z)) == mu
    with pytest.raises(SupportCapExceeded):
        convolve(mu, mu, cap=5)
    with pytest.raises(GroupError):
        convolve(mu, srw_lattice(1))


def test_symmetrize_examples():
    mu = lamplighter_mu(Z2Z)
    assert symmetrize(mu) == mu
    g = PolycyclicElement((1,), (1, 0))
    s = symmetrize(point_mass(SOL, g))
    assert s.as_dict() == {g: Fraction(1, 2), inverse(SOL, g): Fraction(1, 2)}


def random_measure(desc, seed, size=4):
    rng = random.Random(seed)
    atoms = {}
    for _ in range(size):
        atoms[random_element(desc, rng, 2)] = rng.randint(1, 5)
    total = sum(atoms.values())
    return Measure(desc, {g: Fraction(w, total) for g, w in atoms.items()})


descs = st.sampled_from([Lattice(2), Wreath(1, 2), Wreath(2, 3), SOL])


@given(descs, st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_convolve_associative_and_mass_preserving(desc, s1, s2, s3):
    a, b, c = (random_measure(desc, s) for s in (s1, s2, s3))
    left = convolve(convolve(a, b), c)
    assert left == convolve(a, convolve(b, c))
    assert left.total_mass() == 1


@given(descs, st.integers(0, 10**6))
def test_symmetrize_produces_symmetric_measure(desc, seed):
    s = symmetrize(random_measure(desc, seed))
    assert s.is_symmetric() and s.total_mass() == 1


@given(st.lists(st.integers(1, 50), min_size=1, max_size=12))
def test_alias_table_is_exact_up_to_rounding(ws):
    total = sum(ws)
    weights = [Fraction(w, total) for w in ws]
    t = AliasTable(weights)
    n = len(ws)
    implied = [Fraction(0)] * n
    for col in range(n):
        p = Fraction(t.prob[col])
        implied[col] += p / n
        implied[t.alias[col]] += (1 - p) / n
    for w, got in zip(weights, implied):
        assert abs(float(w - got)) < 1e-15


def test_single_atom_always_sampled():
    g = PolycyclicElement((2,), (1, 1))
    m = point_mass(SOL, g)
    rng = Xoshiro256(3)
    assert all(sample(m, rng) == g for _ in range(100))


def test_sampling_frequencies():
    n = 10**6
    mu = lamplighter_mu(Z2Z)
    rng = Xoshiro256(11)
    table = mu.sampler
    counts = [0] * len(mu)
    for _ in range(n):
        counts[table.draw(rng)] += 1
    sd = (1 / 8 * 7 / 8 / n) ** 0.5
    assert all(abs(c / n - 1 / 8) <= 4 * sd for c in counts)
    nu = lamplighter_nu(Z2Z)
    i8 = nu.elements.index(wreath_element(Z2Z, {}, 8))
    hits = sum(1 for _ in range(n) if nu.sampler.draw(rng) == i8)
    assert abs(hits / n - 0.25) <= 3 * (0.25 * 0.75 / n) ** 0.5


def test_json_roundtrip():
    for mu in (lamplighter_nu(Wreath(2, 3)), polycyclic_mu(SOL), srw_lattice(2)):
        back = measure_from_json(measure_to_json(mu))
        assert back == mu


def test_mixture_weights():
    m = mixture([(Fraction(1, 3), point_mass(Lattice(1))), (Fraction(2, 3), srw_lattice(1))])
    assert m.weight(LatticeElement((0,))) == Fraction(1, 3)
    assert m.weight(LatticeElement((1,))) == Fraction(1, 3)
