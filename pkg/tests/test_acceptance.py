"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal
summary (and echoed to stdout) whether it passes or not.
"""
import csv
import math
import time

import numpy as np
import pytest

from conftest import REPORT
from qmix import actions as ac
from qmix import approx as ap
from qmix import experiments as ex
from qmix import group_core as gc
from qmix import limit_resolvent as lr
from qmix import quantum_stats as qs
from qmix import spectra as spc
from qmix.group_algebra import AlgebraElement

pytestmark = pytest.mark.slow

K3K3 = gc.free_product([gc.cyclic_table(3)] * 2)
DIAMOND = ac.BaseGraph.parse("0 1\n1 2\n2 3\n3 0\n0 2")


def verdict(k, ok, detail):
    REPORT[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def adj(spec):
    return AlgebraElement.indicator(gc.standard_generators(spec))


@pytest.fixture(scope="session")
def scenario_runs(tmp_path_factory):
    """Every canned scenario at its default configuration."""
    root = tmp_path_factory.mktemp("scenarios")
    out, errors = {}, {}
    for name in ex.SCENARIOS:
        t = time.monotonic()
        try:
            ex.run_config({"scenario": name}, root / name)
        except ex.CMSViolation as exc:
            errors[name] = str(exc)
        out[name] = (root / name, time.monotonic() - t)
    return out, errors


def results(path, kind=None):
    rows = ex.read_results(path / "results.csv")
    return [r for r in rows if kind is None or r["kind"] == kind]


def _case(i, rng):
    kind = i % 5
    seed = int(rng.integers(1 << 30))
    if kind == 0:
        act, p = ac.random_free_action(int(rng.integers(50, 600)), 2, seed), None
    elif kind == 1:
        act, p = ac.finite_factor_random_action(K3K3, 3 * int(rng.integers(20, 200)), seed), None
    elif kind == 2:
        act, p = ac.torus_action(int(rng.integers(5, 24)), 2), None
    elif kind == 3:
        act = ac.lift_action(DIAMOND, int(rng.integers(20, 150)), seed)
        p = ac.lift_symbol(DIAMOND)
    else:
        act, p = ac.random_matching_action(2 * int(rng.integers(25, 300)), 3, seed), None
    p = p if p is not None else adj(act.spec)
    r = p.r
    if i % 2:
        obs = qs.random_tlocal(act, [gc.standard_generators(act.spec).generators[0]], seed, r=r)
    else:
        obs = qs.iid_observable(act.N, seed, "disc", r)
    return act, p, obs


def test_criterion_1_trace_equality():
    rng = np.random.default_rng(2024)
    t0, worst = time.monotonic(), 0.0
    for i in range(20):
        act, p, obs = _case(i, rng)
        sys = spc.eigendecompose(ac.representation_matrix(act, p))
        assert sys.dim <= 600
        lo = rng.uniform(-4, 3)
        I = (lo, lo + rng.uniform(0.3, 3))
        lo = rng.uniform(-4, 3)
        J = (lo, lo + rng.uniform(0.3, 3))
        K = qs.centered_matrix(obs, act).toarray()
        n = spc.count(sys, I)
        if n == 0:
            I = (-5.0, 5.0)
            n = sys.dim
        PI = sys.eigenvectors[:, spc.window(sys, I).indices]
        PJ = sys.eigenvectors[:, spc.window(sys, J).indices]
        tr = np.trace(K @ (PI @ PI.conj().T) @ K.conj().T @ (PJ @ PJ.conj().T)).real / n
        worst = max(worst, abs(qs.moment_LIJ(sys, K, I, J) - tr))
    dt = time.monotonic() - t0
    verdict(1, worst < 1e-10 and dt < 60, f"max |L_IJ - trace| = {worst:.2e} over 20 tuples in {dt:.1f}s")


def test_criterion_2_ward_identity():
    t0 = time.monotonic()
    models = {"tree3": lr.RegularTree(3), "Z": lr.Lattice(1), "K3*K3": lr.FreeProduct(K3K3),
              "lift": lr.TreeLift(DIAMOND)}
    worst = {}
    for name, m in models.items():
        res = [lr.ward_check(m, complex(E, eta))["residual"]
               for E in (-2.5, -1.0, 0.0, 0.7, 2.0) for eta in (0.2, 0.5, 1.0)]
        worst[name] = max(res)
    dt = time.monotonic() - t0
    ok = max(worst.values()) < 1e-6 and dt < 60
    verdict(2, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f" in {dt:.1f}s")


def test_criterion_3_kesten_density():
    d = lr.spectral_density(lr.RegularTree(3), 0.0)["density"]
    ref = math.sqrt(2) / (3 * math.pi)
    verdict(3, abs(d - ref) < 1e-3, f"density {d:.6f} vs sqrt(2)/(3π) = {ref:.6f}")


def test_criterion_4_free_product_contraction():
    t0 = time.monotonic()
    m = lr.FreeProduct(K3K3)
    worst = 0.0
    for E in np.linspace(-3.0, 4.5, 31):
        for eta in (1.0, 0.3, 0.1, 0.03, 0.01, 0.003):
            z = complex(E, eta)
            worst = max(worst, abs(m.zeta(0, 1, z) * m.zeta(1, 1, z)) ** 2)
    dt = time.monotonic() - t0
    verdict(4, worst <= 0.25 and dt < 60, f"max |ζ1ζ2|² = {worst:.5f} on a 31×6 grid in {dt:.1f}s")


def test_criterion_5_fourth_moment_dichotomy():
    etas = [0.2, 0.1, 0.05, 0.025]
    tree = [lr.fourth_moment(lr.RegularTree(3), complex(0, h), 3.0)["value"] for h in etas]
    line = [lr.fourth_moment(lr.Lattice(1), complex(0, h), 3.0)["value"] for h in etas]
    ok = np.all(np.diff(tree) < 0) and np.all(np.diff(line) >= 0)
    verdict(5, ok, "tree " + " ".join(f"{v:.3g}" for v in tree) + " | Z " + " ".join(f"{v:.3g}" for v in line))


def test_criterion_6_torus_mixing_failure(scenario_runs):
    runs, _ = scenario_runs
    path, dt = runs["torus-mixing-failure"]
    qm = [float(r["value"]) for r in results(path) if r["kind"].startswith("qm_d")]
    big = {}
    for d in (1, 2):
        rows = results(path, f"qe_iid_d{d}")
        N = max(int(r["N"]) for r in rows)
        big[d] = max(float(r["value"]) for r in rows if int(r["N"]) == N)
    ok = min(qm) >= 0.4 and max(big.values()) < 0.05 and dt < 300
    verdict(6, ok, f"min qm {min(qm):.3f}, iid qe at M=80: d=1 {big[1]:.4f}, d=2 {big[2]:.4f}; {dt:.0f}s")


def test_criterion_7_c4_box(scenario_runs):
    runs, _ = scenario_runs
    path, dt = runs["c4-box"]
    rows = results(path, "c4_separated")
    v = float(rows[0]["value"])
    ok = int(rows[0]["N"]) == 800 and abs(v - 0.5) <= 1e-10 and dt < 120
    gen = float(results(path, "c4_generic")[0]["value"])
    verdict(7, ok, f"separated {v:.12f} (generic basis {gen:.4f}) at n=200 in {dt:.1f}s")


def test_criterion_8_qe_decay(scenario_runs):
    runs, _ = scenario_runs
    path, dt = runs["free-qe"]
    rows = results(path, "qe")
    sizes = [500, 1000, 2000, 4000]
    table = {int(s): {} for s in range(5)}
    for r in rows:
        table[int(r["seed"])][int(r["N"])] = float(r["value"])
    mono = sum(all(np.diff([table[s][N] for N in sizes]) < 0) for s in table)
    ratio = np.mean([table[s][4000] for s in table]) / np.mean([table[s][500] for s in table])
    ok = mono >= 4 and ratio < 0.5 and dt < 600
    verdict(8, ok, f"{mono}/5 seeds decreasing, qe(4000)/qe(500) = {ratio:.3f}; {dt:.0f}s")


def test_criterion_9_cms_bracket(scenario_runs):
    runs, errors = scenario_runs
    n, bad, vac = 0, [], 0
    for name, (path, _) in runs.items():
        if name in errors:
            bad.append(name)
            continue
        with open(path / "cms.csv") as fh:
            for r in csv.DictReader(fh):
                n += 1
                vac += r["vacuous"] == "1"
                if r["inside"] != "1":
                    bad.append(name)
    ok = not bad and not errors and n > 0
    verdict(9, ok, f"{n} counts checked across {len(runs)} scenarios, {n - vac} with a non-trivial bracket"
            + (f"; violations in {sorted(set(bad))}" if bad else ""))


def test_criterion_10_window_polynomial():
    rng = np.random.default_rng(7)
    t0, worst = time.monotonic(), 0.0
    a = 4.0
    for _ in range(50):
        eta = rng.uniform(0.15, 1.0)
        E = rng.uniform(-a, a)
        n = ap.min_degree(eta, a) + int(rng.integers(0, 200))
        w = ap.resolvent_poly(complex(E, eta), a, n)
        assert w.precondition
        worst = max(worst, w.error / w.bound)
    dt = time.monotonic() - t0
    verdict(10, worst <= 1 and dt < 60, f"max error/e^(-1/ε) = {worst:.2e} over 50 triples in {dt:.1f}s")
