import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ellipk

from qmix import actions as ac
from qmix import group_core as gc
from qmix import limit_resolvent as lr
from qmix.group_algebra import AlgebraElement

K3K3 = gc.free_product([gc.cyclic_table(3)] * 2)
DIAMOND = ac.BaseGraph.parse("0 1\n1 2\n2 3\n3 0\n0 2")


def r00(model, z):
    return complex(np.trace(model.diag_block(z)) / model.r)


def test_z_must_leave_the_real_axis():
    with pytest.raises(lr.SolverError):
        lr.RegularTree(3).diag_block(1.0 + 0j)


@settings(max_examples=30, deadline=None)
@given(E=st.floats(-4, 4), eta=st.floats(0.01, 2))
def test_herglotz(E, eta):
    z = complex(E, eta)
    for m in (lr.RegularTree(3), lr.Lattice(1), lr.FreeProduct(K3K3)):
        R = r00(m, z)
        assert R.imag > 0
        assert abs(R) <= 1 / eta + 1e-9


def test_lattice_closed_forms():
    z = complex(0.7, 0.05)
    assert np.isclose(r00(lr.Lattice(1), z), -1 / (np.sqrt(z - 2) * np.sqrt(z + 2)))
    E = 1.3
    assert np.isclose(lr.Lattice(2).density(E, 1e-4), ellipk(1 - (E / 4) ** 2) / (2 * np.pi ** 2), rtol=1e-3)


def test_z2_free_product_is_the_three_regular_tree():
    fp = lr.FreeProduct(gc.z2_free_product(3))
    tree = lr.RegularTree(3)
    for z in (0.3 + 0.1j, -2.5 + 0.02j, 3.5 + 0.5j):
        assert np.isclose(r00(fp, z), r00(tree, z), atol=1e-9)
    g = gc.element(fp.spec, (0, 1), (1, 1))
    assert np.isclose(fp.offdiag(g, 0.3 + 0.1j), tree.offdiag(g, 0.3 + 0.1j), atol=1e-9)


def test_one_vertex_lift_is_a_tree():
    base = ac.BaseGraph.parse("0 0\n0 0")
    for z in (0.5 + 0.1j, 3.0 + 0.01j):
        assert np.isclose(r00(lr.TreeLift(base), z), r00(lr.RegularTree(4), z), atol=1e-9)


def test_product_of_lines_is_the_square_lattice():
    pm = lr.ProductModel(lr.Lattice(1), lr.Lattice(1))
    z = complex(1.1, 0.2)
    assert np.isclose(r00(pm, z), r00(lr.Lattice(2), z), atol=1e-6)


def test_cartesian_convolution_with_a_single_vertex():
    cc = lr.CartesianConvolution(np.zeros((1, 1)), lr.RegularTree(4))
    z = complex(0.4, 0.3)
    assert np.isclose(r00(cc, z), r00(lr.RegularTree(4), z))


@pytest.mark.parametrize("model, N", [
    (lr.RegularTree(4), 1200),
    (lr.FreeProduct(K3K3), 1200),
])
def test_finite_graphs_approach_the_limit(model, N):
    spec = model.spec
    act = ac.random_free_action(N, 2, 0) if spec.variant == gc.FREE else ac.finite_factor_random_action(spec, N, 0)
    p = AlgebraElement.indicator(gc.standard_generators(spec))
    z = 0.5 + 0.5j
    fin = lr.finite_resolvent_average(act, p, spec.identity, z)[0, 0]
    assert abs(fin - r00(model, z)) < 1e-2


def test_kesten_density_and_mass():
    t = lr.RegularTree(3)
    assert np.isclose(t.kesten_mckay(0.0), math.sqrt(2) / (3 * math.pi))
    assert np.isclose(t.kesten_mckay_cdf(t.support()[1])[0], 1.0)
    d = lr.spectral_density(t, 0.0)
    assert abs(d["density"] - math.sqrt(2) / (3 * math.pi)) < 1e-4


@pytest.mark.parametrize("model", [lr.RegularTree(3), lr.Lattice(1), lr.FreeProduct(K3K3), lr.TreeLift(DIAMOND)],
                         ids=["tree", "line", "k3k3", "lift"])
def test_ward_identity(model):
    for z in (0.3 + 0.2j, 1.7 + 0.5j):
        assert lr.ward_check(model, z)["residual"] < 1e-6


def test_ac_window():
    out = lr.check_ac(lr.FreeProduct(K3K3), np.linspace(-1.5, 3.5, 6), [0.1, 0.01])
    assert not out["violations"] and out["min"] > 0.1 * math.pi


def test_fourth_moment_dichotomy():
    etas = [0.2, 0.1, 0.05, 0.025]
    tree = [lr.fourth_moment(lr.RegularTree(3), complex(0, h))["value"] for h in etas]
    line = [lr.fourth_moment(lr.Lattice(1), complex(0, h))["value"] for h in etas]
    assert np.all(np.diff(tree) < 0)
    assert np.all(np.diff(line) >= 0)


def test_scan_csv(tmp_path):
    lr.scan_csv(lr.RegularTree(3), [0.0, 1.0], [0.2], tmp_path / "s.csv")
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "E,eta,ReR,ImR,fourth_moment,ward_residual" and len(rows) == 3
