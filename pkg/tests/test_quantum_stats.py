import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmix import actions as ac
from qmix import group_core as gc
from qmix import quantum_stats as qs
from qmix import spectra as spc
from qmix.group_algebra import AlgebraElement


def setup(N=120, seed=0):
    act = ac.random_free_action(N, 2, seed)
    p = AlgebraElement.indicator(gc.standard_generators(act.spec))
    return act, spc.eigendecompose(ac.representation_matrix(act, p))


def projector(sys, I):
    V = sys.eigenvectors[:, spc.window(sys, I).indices]
    return V @ V.conj().T


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(-4, 3), w1=st.floats(0.2, 3), b=st.floats(-4, 3), w2=st.floats(0.2, 3))
def test_moment_is_a_trace(seed, a, w1, b, w2):
    act, sys = setup(60, seed % 7)
    obs = qs.random_tlocal(act, [gc.generator(act.spec, 0)], seed)
    K = qs.centered_matrix(obs, act).toarray()
    I, J = (a, a + w1), (b, b + w2)
    n = spc.count(sys, I)
    lhs = qs.moment_LIJ(sys, K, I, J)
    rhs = 0.0 if n == 0 else np.trace(K @ projector(sys, I) @ K.conj().T @ projector(sys, J)).real / n
    assert abs(lhs - rhs) < 1e-10


def test_statistics_are_basis_independent():
    act = ac.torus_action(30, 1)
    p = AlgebraElement.indicator(gc.standard_generators(act.spec))
    op = ac.representation_matrix(act, p)
    s0, s1 = spc.eigendecompose(op), spc.eigendecompose(op, rerandomize=True, seed=5)
    obs = qs.iid_observable(30, 1)
    for I in [(-1.5, 1.5), (0.2, 2.0)]:
        assert np.isclose(qs.qe_statistic(s0, obs, act, I), qs.qe_statistic(s1, obs, act, I))
    assert np.isclose(qs.qm_statistic(s0, obs, act, 0.5, 0.5, 0.3), qs.qm_statistic(s1, obs, act, 0.5, 0.5, 0.3))


def test_qe_diagonal_form_agrees_for_nondegenerate_spectra():
    act, sys = setup(200, 4)
    assert np.min(np.diff(sys.eigenvalues)) > 1e-8
    obs = qs.iid_observable(200, 2)
    I = (-2.0, 2.0)
    assert np.isclose(qs.qe_statistic(sys, obs, act, I), qs.qe_diagonal_form(sys, obs.diagonal_vector(), I))


def test_centring_removes_the_mean():
    act, sys = setup(100, 1)
    a = np.full(100, 3.0)
    K = qs.centered_matrix(qs.diagonal_observable(a), act)
    assert abs(K).max() < 1e-12


def test_mixing_bounds_ergodic_moment():
    act, sys = setup(150, 2)
    K = qs.centered_matrix(qs.iid_observable(150, 3), act)
    lhs, rhs = qs.mixtoergo_check(sys, K, (-2.0, 2.0), 0.0, 0.1)
    assert lhs <= rhs + 1e-12


def test_torus_fourier_observable_does_not_mix():
    M = 40
    act = ac.torus_action(M, 1)
    sys = spc.eigendecompose(ac.representation_matrix(act, AlgebraElement.indicator(gc.standard_generators(act.spec))))
    obs = qs.fourier_observable(act, [1])
    assert qs.qm_statistic(sys, obs, act, 0.0, 0.0, 1.0) >= 0.4


def test_c4_separated_basis_value():
    n = 60
    G = ac.random_free_action(n, 2, 0)
    sG = spc.eigendecompose(ac.representation_matrix(G, AlgebraElement.indicator(gc.standard_generators(G.spec))))
    V = np.kron(qs.C4_BASIS, sG.eigenvectors)
    a = qs.c4_sign_observable(n).diagonal_vector()
    vals = qs.diagonal_expectations(V, a)
    assert abs(np.mean(vals ** 2) - 0.5) < 1e-10
    F = qs.C4_BASIS @ np.diag(qs.C4_EIGENVALUES) @ qs.C4_BASIS.T
    assert np.allclose(F, np.roll(np.eye(4), 1, 0) + np.roll(np.eye(4), -1, 0))


def test_covariance_of_a_constant_is_zero():
    act = ac.random_free_action(50, 2, 0)
    g = gc.generator(act.spec, 0)
    assert qs.sigma_norm(np.ones(50), act, g) == 0
    a = qs.iid_observable(50, 1).diagonal_vector()
    assert np.isclose(qs.empirical_covariance(a, act, act.spec.identity), np.var(a))


def test_observable_generators():
    act = ac.random_free_action(40, 2, 0)
    a = qs.cycle_sign_observable(act, gc.generator(act.spec, 0)).diagonal_vector()
    assert set(np.unique(a)) <= {-1.0, 1.0}
    z = qs.iid_observable(40, 0, "disc").diagonal_vector()
    assert np.all(np.abs(z) <= 1)
    with pytest.raises(ValueError):
        qs.iid_observable(10, 0, "cauchy")
    glued = ac.glued_copies_action(ac.random_free_action(20, 4, 1), 8, 1)
    b = qs.block_indicator_observable(glued).diagonal_vector()
    assert b.sum() == 0 and b[glued.meta["hub"]] == 0


def test_average_symbol_of_a_diagonal_observable():
    act = ac.random_free_action(30, 2, 0)
    a = np.arange(30.0)
    sym = qs.average_symbol(qs.diagonal_observable(a), act)
    assert np.isclose(sym[act.spec.identity][0, 0], a.mean())
