import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from walklab.groups import (
    GroupError,
    Lattice,
    LatticeElement,
    Polycyclic,
    PolycyclicElement,
    Wreath,
    WreathElement,
    apply_action,
    canonical_key,
    decode_key,
    descriptor_from_dict,
    descriptor_to_dict,
    identity,
    int_det,
    int_inverse_unimodular,
    inverse,
    multiply,
    random_element,
    sol,
    wreath_element,
)

SOL = sol()
A = ((2, 1), (1, 1))
A2 = ((5, 3), (3, 2))
SOL2 = Polycyclic((A, A2))
FAMILIES = {
    "Z2": Lattice(2),
    "Z2wrZ": Wreath(1, 2),
    "Z3wrZ2": Wreath(2, 3),
    "ZwrZ": Wreath(1, None),
    "Sol": SOL,
    "Sol-m2": SOL2,
}


def elements(desc, radius=3):
    seeds = st.integers(min_value=0, max_value=2**32)
    return seeds.map(lambda s: random_element(desc, random.Random(s), radius))


# --- examples


def test_wreath_product_example():
    g = Wreath(1, 2)
    a = wreath_element(g, {0: 1}, 1)
    assert multiply(g, a, a) == wreath_element(g, {0: 1, 1: 1}, 2)


def test_wreath_identity_is_neutral():
    g = Wreath(1, 2)
    a = wreath_element(g, {3: 1, -2: 1}, 5)
    assert multiply(g, identity(g), a) == a
    assert multiply(g, a, identity(g)) == a


def test_right_multiplication_flips_lamp_under_walker():
    g = Wreath(1, 2)
    walker = wreath_element(g, {}, 7)
    flip = wreath_element(g, {0: 1}, 0)
    assert multiply(g, walker, flip).lamp_dict() == {(7,): 1}


def test_sol_product_example():
    assert multiply(SOL, PolycyclicElement((1,), (0, 0)), PolycyclicElement((0,), (1, 0))) == PolycyclicElement(
        (1,), (2, 1)
    )


def test_inverse_examples():
    assert inverse(Lattice(2), LatticeElement((3, -2))) == LatticeElement((-3, 2))
    assert inverse(SOL, PolycyclicElement((1,), (0, 0))) == PolycyclicElement((-1,), (0, 0))
    assert inverse(SOL, PolycyclicElement((0,), (1, 0))) == PolycyclicElement((0,), (-1, 0))
    assert inverse(SOL, PolycyclicElement((1,), (1, 0))) == PolycyclicElement((-1,), (-1, 1))


def test_apply_action_examples():
    assert apply_action(SOL, (0,), (4, -7)) == (4, -7)
    assert apply_action(SOL, (2,), (1, 0)) == (5, 3)
    assert apply_action(SOL, (-1,), (1, 0)) == (1, -1)


def test_unimodular_helpers():
    assert int_det(A) == 1
    assert int_inverse_unimodular(A) == ((1, -1), (-1, 2))
    with pytest.raises(GroupError):
        int_inverse_unimodular(((2, 0), (0, 1)))


def test_descriptor_validation():
    with pytest.raises(GroupError):
        Polycyclic((((2, 0), (0, 1)),))  # det 2
    with pytest.raises(GroupError):
        Polycyclic((A, ((1, 1), (0, 1))))  # do not commute
    with pytest.raises(GroupError):
        Polycyclic((((0, 1), (-1, 0)),))  # rotation: complex eigenvalues
    with pytest.raises(GroupError):
        Polycyclic((((-1, 0), (0, -1)),))  # negative eigenvalues
    with pytest.raises(GroupError):
        Wreath(1, 1)
    with pytest.raises(GroupError):
        Lattice(0)


def test_family_mismatch_is_rejected():
    with pytest.raises(GroupError):
        multiply(SOL, LatticeElement((0, 0)), identity(SOL))
    with pytest.raises(GroupError):
        apply_action(Lattice(2), (1,), (0, 0))


def test_lamp_canonical_sparsity():
    g = Wreath(1, 3)
    a = wreath_element(g, {0: 2}, 0)
    b = wreath_element(g, {0: 1}, 0)
    assert multiply(g, a, b).lamps == ()
    with pytest.raises(GroupError):
        WreathElement((((0,), 0),), (0,))


def test_canonical_key_identity_bytes():
    assert canonical_key(Lattice(2), identity(Lattice(2))) == bytes([1, 1, 2, 0, 0])
    assert canonical_key(Wreath(1, 2), identity(Wreath(1, 2))) == bytes([1, 2, 1, 2, 0, 0])
    assert canonical_key(SOL, identity(SOL)) == bytes([1, 3, 1, 2, 0, 0, 0])


def test_canonical_key_ignores_insertion_order():
    g = Wreath(2, 3)
    a = wreath_element(g, {(1, 2): 1, (-3, 0): 2}, (0, 1))
    b = wreath_element(g, [((-3, 0), 2), ((1, 2), 1)], (0, 1))
    assert canonical_key(g, a) == canonical_key(g, b)


def test_descriptor_dict_roundtrip():
    for desc in FAMILIES.values():
        assert descriptor_from_dict(descriptor_to_dict(desc)) == desc


# --- properties


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_group_axioms_on_random_triples(name):
    desc = FAMILIES[name]
    rng = random.Random(hash(name) & 0xFFFF)
    e = identity(desc)
    for _ in range(300):
        a, b, c = (random_element(desc, rng) for _ in range(3))
        assert multiply(desc, multiply(desc, a, b), c) == multiply(desc, a, multiply(desc, b, c))
        assert multiply(desc, a, inverse(desc, a)) == e
        assert multiply(desc, inverse(desc, a), a) == e


@given(st.data())
def test_associativity_property(data):
    desc = data.draw(st.sampled_from(list(FAMILIES.values())))
    a, b, c = (data.draw(elements(desc)) for _ in range(3))
    assert multiply(desc, multiply(desc, a, b), c) == multiply(desc, a, multiply(desc, b, c))


@given(st.data())
def test_sparsity_after_multiply(data):
    desc = data.draw(st.sampled_from([FAMILIES["Z2wrZ"], FAMILIES["Z3wrZ2"], FAMILIES["ZwrZ"]]))
    a, b = data.draw(elements(desc)), data.draw(elements(desc))
    p = multiply(desc, a, b)
    assert all(v != 0 for _, v in p.lamps)
    sites = [s for s, _ in p.lamps]
    assert sites == sorted(sites)


vec = st.lists(st.integers(-4, 4), min_size=2, max_size=2).map(tuple)
ks = st.lists(st.integers(-5, 5), min_size=2, max_size=2).map(tuple)


@given(ks, ks, vec)
def test_action_homomorphism(k, l, y):
    kl = tuple(p + q for p, q in zip(k, l))
    assert apply_action(SOL2, kl, y) == apply_action(SOL2, k, apply_action(SOL2, l, y))
    assert apply_action(SOL, kl[:1], y) == apply_action(SOL, k[:1], apply_action(SOL, l[:1], y))


@given(ks, vec)
def test_action_factor_order_is_irrelevant(k, y):
    forward = apply_action(SOL2, (k[0], 0), apply_action(SOL2, (0, k[1]), y))
    backward = apply_action(SOL2, (0, k[1]), apply_action(SOL2, (k[0], 0), y))
    assert forward == backward == apply_action(SOL2, k, y)


@given(st.data())
def test_canonical_key_is_injective_and_decodable(data):
    desc = data.draw(st.sampled_from(list(FAMILIES.values())))
    a, b = data.draw(elements(desc)), data.draw(elements(desc))
    assert (canonical_key(desc, a) == canonical_key(desc, b)) == (a == b)
    assert decode_key(desc, canonical_key(desc, a)) == a


def test_keys_of_small_box_are_distinct():
    desc = Wreath(1, 2)
    seen = {}
    for pos in range(-2, 3):
        for bits in itertools.product((0, 1), repeat=4):
            g = wreath_element(desc, {i - 2: v for i, v in enumerate(bits)}, pos)
            key = canonical_key(desc, g)
            assert seen.setdefault(key, g) == g
    assert len(seen) == 5 * 16


def test_decode_rejects_foreign_keys():
    with pytest.raises(GroupError):
        decode_key(SOL, canonical_key(Lattice(2), identity(Lattice(2))))
