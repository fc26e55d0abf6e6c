import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qmix import actions as ac
from qmix import group_core as gc
from qmix import spectra as spc
from qmix.group_algebra import AlgebraElement
from qmix.limit_resolvent import RegularTree


def free_system(N, seed, **kw):
    act = ac.random_free_action(N, 2, seed)
    p = AlgebraElement.indicator(gc.standard_generators(act.spec))
    return spc.eigendecompose(ac.representation_matrix(act, p), **kw)


def test_decomposition_residual_and_orthonormality():
    sys = free_system(150, 0)
    assert sys.residual() < 1e-12
    assert sys.gram_error() < 1e-12
    assert np.all(np.diff(sys.eigenvalues) >= 0)
    assert np.isclose(sys.eigenvalues[-1], 4.0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000))
def test_rerandomized_basis_keeps_cluster_projections(seed):
    sys0 = spc.eigendecompose(ac.representation_matrix(
        ac.torus_action(12, 1), AlgebraElement.indicator(gc.standard_generators(gc.integer_lattice(1)))))
    sys1 = spc.eigendecompose(sys0.source, rerandomize=True, seed=seed)
    assert sys1.residual() < 1e-12
    for s in sys0.clusters():
        P0 = sys0.eigenvectors[:, s] @ sys0.eigenvectors[:, s].conj().T
        P1 = sys1.eigenvectors[:, s] @ sys1.eigenvectors[:, s].conj().T
        assert np.allclose(P0, P1, atol=1e-10)


def test_window_is_closed():
    sys = spc.from_arrays(np.array([-1.0, 0.0, 0.0, 2.0]), np.eye(4))
    assert spc.count(sys, (0.0, 2.0)) == 3
    assert spc.count(sys, (0.5, 1.5)) == 0
    assert list(spc.window(sys, (-1, 0)).indices) == [0, 1, 2]


@pytest.mark.parametrize("coupling", ["cartesian", "tensor"])
def test_product_eigensystem(coupling):
    inner = free_system(40, 2)
    F = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0.0]])
    sys = spc.product_eigensystem(F, inner, coupling)
    P = inner.source.dense()
    M = np.kron(F, np.eye(40)) + np.kron(np.eye(3), P) if coupling == "cartesian" else np.kron(F, P)
    V = sys.eigenvectors
    assert np.allclose(M @ V, V * sys.eigenvalues, atol=1e-10)
    assert np.allclose(sys.eigenvalues, np.linalg.eigvalsh(M), atol=1e-10)


def test_empirical_measure_near_kesten_mckay():
    sys = free_system(2000, 7)
    mu = spc.empirical_measure(sys)
    assert spc.kolmogorov_distance(mu, RegularTree(4).kesten_mckay_cdf) < 0.03
    A = sys.source.dense()
    assert np.isclose(mu.moment(2), np.sum(A * A) / 2000)


def test_spectral_measure_at_a_vertex():
    sys = free_system(300, 1)
    mu = spc.spectral_measure_at(sys, np.eye(300)[0])
    assert np.isclose(mu.mass(-10, 10), 1.0)
    A = sys.source.dense()
    assert np.isclose(mu.moment(2), (A @ A)[0, 0])
    with pytest.raises(spc.SpectralError):
        spc.spectral_measure_at(sys, np.zeros(300))


def test_non_hermitian_rejected():
    with pytest.raises(spc.SpectralError):
        spc.eigendecompose(np.array([[0, 1], [0, 0.0]]))


def test_eigenvector_file_roundtrip(tmp_path):
    sys = free_system(20, 3)
    spc.write_eigenvectors_bin(sys, tmp_path / "v.bin", 20)
    V, N, r = spc.read_eigenvectors_bin(tmp_path / "v.bin")
    assert (N, r) == (20, 1)
    assert np.allclose(V, sys.eigenvectors)
    spc.write_eigenvalues_csv(sys, tmp_path / "e.csv")
    vals = np.loadtxt(tmp_path / "e.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.array_equal(vals, sys.eigenvalues)
