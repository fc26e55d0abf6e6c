import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmix import actions as ac
from qmix import group_core as gc
from qmix.group_algebra import AlgebraElement

K3K3 = gc.free_product([gc.cyclic_table(3)] * 2)


def adjacency(action):
    return ac.representation_matrix(action, AlgebraElement.indicator(gc.standard_generators(action.spec))).dense()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31), word=st.lists(st.tuples(st.integers(0, 1), st.sampled_from([1, -1, 2])), max_size=6),
       word2=st.lists(st.tuples(st.integers(0, 1), st.sampled_from([1, -1])), max_size=6))
def test_action_is_a_homomorphism(seed, word, word2):
    act = ac.random_free_action(17, 2, seed)
    F = act.spec
    g, h = gc.reduce(F, word), gc.reduce(F, word2)
    assert np.array_equal(act.perm(g * h), act.perm(g)[act.perm(h)])
    x = seed % 17
    assert act.act(g * h, x) == act.act(g, act.act(h, x))


def test_rho_convention():
    act = ac.random_free_action(9, 2, 4)
    g = gc.generator(act.spec, 1)
    M = act.matrix(g).toarray()
    for y in range(9):
        assert M[act.act(g, y), y] == 1


@pytest.mark.parametrize("make, degree", [
    (lambda: ac.random_free_action(60, 2, 0), 4),
    (lambda: ac.random_matching_action(60, 3, 0), 3),
    (lambda: ac.finite_factor_random_action(K3K3, 60, 0), 4),
    (lambda: ac.torus_action(7, 2), 4),
])
def test_schreier_graphs_are_regular(make, degree):
    A = adjacency(make())
    assert np.allclose(A, A.T)
    assert np.allclose(A.sum(axis=1), degree)


def test_finite_factor_relations_hold():
    act = ac.finite_factor_random_action(K3K3, 30, 2)
    a = gc.generator(K3K3, 0, 1)
    assert np.array_equal(act.perm(a * a * a), np.arange(30))
    with pytest.raises(ac.ActionError):
        ac.finite_factor_random_action(K3K3, 31, 0)


def test_torus_bad_set():
    act = ac.torus_action(10, 1)
    assert ac.bad_set(act, None, 2).size == 0
    assert ac.bad_set(act, None, 5).size == 10
    assert np.allclose(ac.bs_profile(act, None, 5), [0, 0, 0, 0, 0, 1])


def test_min_fix_length_on_a_cycle():
    act = ac.torus_action(6, 1)
    assert np.all(ac.min_fix_length(act, None, 10) == 6)


def test_lift_matches_base_graph():
    base = ac.BaseGraph.parse("0 1\n1 2\n2 3\n3 0\n0 2")
    N = 40
    op = ac.representation_matrix(ac.lift_action(base, N, 3), ac.lift_symbol(base))
    A = op.dense()
    assert np.allclose(A, A.T)
    # block sums recover the base adjacency
    blocks = A.reshape(base.r, N, base.r, N).sum(axis=(1, 3)) / N
    assert np.allclose(blocks, base.adjacency())
    assert ac.BaseGraph.parse(base.dumps()) == base


def test_glued_copies_structure():
    F = ac.random_free_action(40, 4, 5)
    act = ac.glued_copies_action(F, 8, 5)
    m = act.meta
    assert act.N == 4 * 40 + 1 and m["hub"] == 160
    A = adjacency(act)
    assert np.allclose(A.sum(axis=1), 8)
    G = nx.from_numpy_array(np.where(np.eye(act.N, dtype=bool), 0, A))
    G.remove_node(m["hub"])
    assert nx.number_connected_components(G) >= 4
    with pytest.raises(ac.ActionError):
        ac.glued_copies_action(F, 6, 0)


def test_product_action_commutes_across_factors():
    spec = gc.racg(6, [(i, j) for i in range(3) for j in range(3, 6)])
    a = ac.random_matching_action(8, 3, 0)
    b = ac.random_matching_action(6, 3, 1)
    act = ac.product_action(a, b, spec)
    for i in range(3):
        for j in range(3, 6):
            s, t = gc.generator(spec, i), gc.generator(spec, j)
            assert np.array_equal(act.perm(s)[act.perm(t)], act.perm(t)[act.perm(s)])
    assert np.allclose(adjacency(act).sum(axis=1), 6)


def test_json_roundtrip():
    act = ac.finite_factor_random_action(K3K3, 12, 1)
    back = ac.PermutationAction.from_json(act.to_json())
    g = gc.element(K3K3, (0, 1), (1, 2))
    assert np.array_equal(back.perm(g), act.perm(g))


def test_matchings_need_even_n():
    with pytest.raises(ac.ActionError):
        ac.random_matching_action(7, 2, 0)
