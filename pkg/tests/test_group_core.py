import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmix import group_core as gc

SPECS = {
    "free2": gc.free_group(2),
    "z2": gc.integer_lattice(2),
    "k3k3": gc.free_product([gc.cyclic_table(3)] * 2),
    "z2z2z3": gc.free_product([gc.cyclic_table(2), gc.cyclic_table(2), gc.cyclic_table(3)]),
    "racg_c5": gc.racg(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]),
    "racg_k33": gc.racg(6, [(i, j) for i in range(3) for j in range(3, 6)]),
}


def words(spec, max_len=8):
    gens = gc.standard_generators(spec).generators
    return st.lists(st.sampled_from(gens), max_size=max_len).map(
        lambda ws: _prod(spec, ws))


def _prod(spec, ws):
    out = spec.identity
    for g in ws:
        out = gc.multiply(out, g)
    return out


@pytest.mark.parametrize("name", list(SPECS))
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_group_axioms(name, data):
    spec = SPECS[name]
    a, b, c = (data.draw(words(spec)) for _ in range(3))
    e = spec.identity
    assert (a * b) * c == a * (b * c)
    assert a * e == a == e * a
    assert a * gc.inverse(a) == e
    assert gc.inverse(gc.inverse(a)) == a


@pytest.mark.parametrize("name", list(SPECS))
@settings(max_examples=30, deadline=None)
@given(data=st.data())
def test_word_length_is_a_length(name, data):
    spec = SPECS[name]
    a, b = data.draw(words(spec)), data.draw(words(spec))
    la, lb = gc.word_length(a), gc.word_length(b)
    assert gc.word_length(gc.inverse(a)) == la
    assert gc.word_length(a * b) <= la + lb
    assert (la == 0) == (a == spec.identity)


def test_free_reduction_cancels():
    F = gc.free_group(2)
    assert gc.element(F, (0, 1), (0, -1), (1, 2)) == gc.generator(F, 1, 2)
    assert gc.element(F, (0, 2), (0, -2)) == F.identity


def test_free_ball_matches_closed_form():
    F = gc.free_group(2)
    for r in range(5):
        assert len(gc.ball(F, None, r)) == gc.free_ball_size(2, r)
    assert gc.free_ball_size(1, 4) == 9


def test_k3k3_sphere_sizes():
    spec = SPECS["k3k3"]
    lens = np.bincount([k for _, k in gc.ball(spec, None, 4)])
    assert list(lens) == [1, 4, 8, 16, 32]


def test_lattice_is_abelian():
    Z = SPECS["z2"]
    a, b = gc.generator(Z, 0, 3), gc.generator(Z, 1, -2)
    assert a * b == b * a
    assert gc.word_length(a * b) == 5


def test_racg_commuting_and_involutions():
    spec = SPECS["racg_c5"]
    s = [gc.generator(spec, i) for i in range(5)]
    assert s[0] * s[0] == spec.identity
    assert s[0] * s[1] == s[1] * s[0]
    assert s[0] * s[2] != s[2] * s[0]
    # ShortLex normal form is independent of the commuting order
    assert (s[1] * s[0] * s[3]).word == (s[0] * s[1] * s[3]).word


def test_racg_word_problem_against_ball_search():
    spec = SPECS["racg_k33"]
    S = gc.standard_generators(spec)
    rng = np.random.default_rng(3)
    for _ in range(30):
        w = _prod(spec, [S.generators[i] for i in rng.integers(0, 6, 7)])
        assert gc.word_length(w) == gc.word_length(w, gc.GeneratingSet(S.generators, True))


@pytest.mark.parametrize("diagram, expected", [
    ((6, [(i, j) for i in range(3) for j in range(3, 6)]), True),
    ((4, [(0, 1), (1, 2), (2, 3), (3, 0)]), False),
    ((5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]), False),
    ((3, []), True),
])
def test_superflexible(diagram, expected):
    ok, wit = gc.is_superflexible(gc.racg(*diagram))
    assert ok is expected
    if ok:
        adj = np.asarray(gc.racg(*diagram).commuting)
        for w in wit:
            phi = np.array(w.automorphism)
            assert np.array_equal(adj[np.ix_(phi, phi)], adj)


def test_json_roundtrip():
    for spec in SPECS.values():
        assert gc.GroupSpec.from_json(spec.to_json()) == spec


def test_bad_inputs():
    with pytest.raises(gc.GroupError):
        gc.racg(3, [(0, 0)])
    with pytest.raises(gc.GroupError):
        gc.ball(gc.free_group(2), None, -1)
    with pytest.raises(gc.GroupError):
        gc.is_superflexible(gc.free_group(2))
