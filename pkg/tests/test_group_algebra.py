import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmix import actions as ac
from qmix import group_core as gc
from qmix.group_algebra import (AlgebraElement, AlgebraError, apply_polynomial, convolve, laurent,
                                norms, rd_norm_bound, star)

F2 = gc.free_group(2)
K3K3 = gc.free_product([gc.cyclic_table(3)] * 2)


@st.composite
def symbols(draw, spec, r=1, max_terms=4):
    gens = gc.standard_generators(spec).generators
    n = draw(st.integers(1, max_terms))
    sup = {}
    for _ in range(n):
        word = draw(st.lists(st.sampled_from(gens), max_size=3))
        g = spec.identity
        for s in word:
            g = g * s
        re = draw(st.lists(st.floats(-2, 2), min_size=r * r, max_size=r * r))
        im = draw(st.lists(st.floats(-2, 2), min_size=r * r, max_size=r * r))
        sup[g] = np.reshape(np.array(re) + 1j * np.array(im), (r, r))
    return AlgebraElement(spec, sup, r)


@settings(max_examples=30, deadline=None)
@given(p=symbols(F2, 2), q=symbols(F2, 2), s=symbols(F2, 2))
def test_convolution_associative(p, q, s):
    assert convolve(convolve(p, q), s).allclose(convolve(p, convolve(q, s)), 1e-9)


@settings(max_examples=30, deadline=None)
@given(p=symbols(K3K3, 2), q=symbols(K3K3, 2))
def test_star_reverses_products(p, q):
    assert star(convolve(p, q)).allclose(convolve(star(q), star(p)), 1e-9)
    assert star(star(p)).allclose(p)


@settings(max_examples=20, deadline=None)
@given(p=symbols(F2, 2), q=symbols(F2, 2), seed=st.integers(0, 10_000))
def test_representation_is_multiplicative(p, q, seed):
    act = ac.random_free_action(12, 2, seed)
    lhs = ac.representation_matrix(act, convolve(p, q)).matrix.toarray()
    rhs = (ac.representation_matrix(act, p).matrix @ ac.representation_matrix(act, q).matrix).toarray()
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_closed_walks_on_the_four_regular_tree():
    A = AlgebraElement.indicator(gc.standard_generators(F2))
    ident = [apply_polynomial(np.eye(k + 1)[k], A)[F2.identity][0, 0].real for k in range(7)]
    assert np.allclose(ident, [1, 0, 4, 0, 28, 0, 232])


def test_polynomial_matches_matrix_polynomial():
    act = ac.random_free_action(30, 2, 1)
    A = AlgebraElement.indicator(gc.standard_generators(F2))
    c = [0.5, -1.0, 0.25, 0.1]
    lhs = ac.representation_matrix(act, apply_polynomial(c, A)).matrix.toarray()
    M = ac.representation_matrix(act, A).matrix.toarray()
    rhs = sum(ck * np.linalg.matrix_power(M, k) for k, ck in enumerate(c))
    assert np.allclose(lhs, rhs)


def test_norms_and_rd_bound():
    A = AlgebraElement.indicator(gc.standard_generators(F2))
    l1, l2, diam = norms(A)
    assert (l1, diam) == (4.0, 2)
    assert np.isclose(l2, 2.0)
    # 2^{3/2}·2 for four generators of length one
    assert np.isclose(rd_norm_bound(A, 3.0), np.sqrt(4 * 2 ** 3))
    with pytest.raises(AlgebraError):
        rd_norm_bound(A, 0.0)


def test_laurent_on_z():
    Z = gc.integer_lattice(1)
    p = laurent(Z, {1: 1.0, -1: 1.0})
    assert p.is_self_adjoint()
    p2 = convolve(p, p)
    assert np.isclose(p2[Z.identity][0, 0], 2.0)


def test_block_shape_mismatch():
    with pytest.raises(AlgebraError):
        AlgebraElement(F2, {F2.identity: np.eye(2), gc.generator(F2, 0): np.eye(3)})


def test_json_roundtrip():
    p = AlgebraElement(K3K3, {gc.generator(K3K3, 0, 1): [[1, 2j], [0, 1]]}, 2)
    assert AlgebraElement.from_json(p.to_json()).allclose(p)
