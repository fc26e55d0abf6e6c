"""Config-driven experiment runner with canned scenarios.

A config is one JSON document

    {"scenario": ..., "sizes": [...], "seeds": [...], "eta_ladder": [...],
     "intervals": [[lo, hi], ...], "observable": {"kind": ...},
     "output_dir": ..., "params": {...}, "budget_seconds": ...}

where everything but ``scenario`` falls back to the scenario preset.  A
run writes results.csv, cms.csv, audit.jsonl, plots/*.svg and meta.json.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from . import actions as ac
from . import approx as ap
from . import group_core as gc
from . import limit_resolvent as lr
from . import quantum_stats as qs
from . import spectra as spc
from .group_algebra import AlgebraElement

RESULT_FIELDS = ["scenario", "kind", "N", "seed", "E1", "E2", "eta", "lo", "hi", "count", "value"]
CMS_FIELDS = ["scenario", "N", "seed", "lo", "hi", "n", "count", "lower", "upper", "mass",
              "bad", "bad_exact", "inside", "simple_inside", "vacuous"]


class ConfigError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


class CMSViolation(AssertionError):
    pass


OBSERVABLE_KINDS = ["iid", "fourier", "cycle_sign", "block_indicator", "c4_sign"]

SCHEMA = {
    "type": "object",
    "required": ["scenario"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"type": "string"},
        "sizes": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
        "eta_ladder": {"type": "array", "minItems": 1,
                       "items": {"type": "number", "exclusiveMinimum": 0}},
        "intervals": {"type": "array", "minItems": 1,
                      "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                "items": {"type": "number"}}},
        "observable": {"type": "object", "required": ["kind"],
                       "properties": {"kind": {"enum": OBSERVABLE_KINDS},
                                      "law": {"enum": ["pm1", "disc"]},
                                      "u": {"type": "array", "items": {"type": "integer"}}}},
        "output_dir": {"type": "string"},
        "params": {"type": "object"},
        "budget_seconds": {"type": "number", "exclusiveMinimum": 0},
    },
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def sub_seed(seed: int, *keys: int) -> int:
    """A derived 32-bit seed, independent across keys."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


@dataclass
class Context:
    scenario: str
    config: dict
    start: float = field(default_factory=time.monotonic)
    rows: list = field(default_factory=list)
    cms: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    plots: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    _c0: dict = field(default_factory=dict)
    _mass: dict = field(default_factory=dict)

    @property
    def params(self) -> dict:
        return self.config["params"]

    def check_budget(self) -> None:
        el = time.monotonic() - self.start
        if el > self.config["budget_seconds"]:
            raise BudgetExceeded(f"{self.scenario}: {el:.1f}s exceeds the budget of "
                                 f"{self.config['budget_seconds']}s")

    def row(self, kind, value, N=None, seed=None, E1=None, E2=None, eta=None, lo=None, hi=None, count=None):
        self.rows.append({"scenario": self.scenario, "kind": kind, "N": N, "seed": seed, "E1": E1,
                          "E2": E2, "eta": eta, "lo": lo, "hi": hi, "count": count, "value": value})

    def series(self, plot: str, name: str, x, y, **opts) -> None:
        p = self.plots.setdefault(plot, {"series": {}, **opts})
        xs, ys = p["series"].setdefault(name, ([], []))
        xs.append(float(x))
        ys.append(float(y))

    def cms_check(self, sys, model, action, p, N, seed, ns=None, intervals=None) -> None:
        """Exact counts against the counting bounds on every interval."""
        eps = float(self.params.get("eps_dist", 0.1))
        badc = {}
        for lo, hi in intervals or self.config["intervals"]:
            I = (lo - eps, hi + eps)
            key = (id(model), I)
            if key not in self._c0:
                self._c0[key] = ap.density_bound(model, I, points=int(self.params.get("density_points", 201)))
            mkey = (id(model), lo, hi)
            if mkey not in self._mass:
                self._mass[mkey] = ap.spectral_mass(model, (lo, hi), nodes=int(self.params.get("mass_nodes", 400)))
            for n in ns or self.params.get("cms_n", [1, 2, 3]):
                rad = 2 * n * max(ap._symbol_radius(p), 1)
                if rad not in badc:
                    badc[rad] = ap.bad_count(action, rad)
                r = ap.cms_check(sys, model, action, p, (lo, hi), n, eps, self._c0[key], I, badc[rad],
                                 self._mass[mkey])
                self.cms.append({"scenario": self.scenario, "N": N, "seed": seed, "lo": lo, "hi": hi,
                                 "n": n, "count": r["count"], "lower": r["lower"], "upper": r["upper"],
                                 "mass": r["mass"], "bad": r["bad"], "bad_exact": r["bad_exact"],
                                 "inside": r["inside"], "simple_inside": r["simple_inside"],
                                 "vacuous": r["vacuous"]})
                if not r["inside"]:
                    raise CMSViolation(f"{self.scenario}: |Λ_J| = {r['count']} outside "
                                       f"[{r['lower']:.3f}, {r['upper']:.3f}] for J = {(lo, hi)}, n = {n}")


def adjacency_symbol(spec) -> AlgebraElement:
    return AlgebraElement.indicator(gc.standard_generators(spec))


def make_observable(cfg: dict, action, seed: int, r: int = 1):
    kind = cfg["kind"]
    if kind == "iid":
        return qs.iid_observable(action.N, seed, cfg.get("law", "pm1"), r)
    if kind == "fourier":
        d = action.meta.get("d", 1)
        u = cfg.get("u", [1] + [0] * (d - 1))
        return qs.fourier_observable(action, u[:d])
    if kind == "cycle_sign":
        return qs.cycle_sign_observable(action, gc.generator(action.spec, 0))
    if kind == "block_indicator":
        return qs.block_indicator_observable(action)
    if kind == "c4_sign":
        return qs.c4_sign_observable(action.N)
    raise ConfigError(f"unknown observable {kind!r}")


def _timed(ctx, label):
    class _T:
        def __enter__(self):
            self.t = time.monotonic()

        def __exit__(self, *exc):
            ctx.timing[label] = ctx.timing.get(label, 0.0) + time.monotonic() - self.t
            ctx.check_budget()
    return _T()


# -- scenarios -----------------------------------------------------------------------

def _qe_rows(ctx, sys, obs, action, N, seed, kind="qe"):
    for lo, hi in ctx.config["intervals"]:
        v = qs.qe_statistic(sys, obs, action, (lo, hi))
        ctx.row(kind, v, N=N, seed=seed, lo=lo, hi=hi, count=spc.count(sys, (lo, hi)))
        ctx.series(f"{kind}_vs_N", f"seed {seed} [{lo:g},{hi:g}]", N, v, xlabel="N", ylabel=kind, logx=True, logy=True)


def _audits(ctx, action, p, obs, sys, N, E=0.0):
    n = int(ctx.params.get("audit_n", 3))
    for eta in ctx.config["eta_ladder"]:
        rec = ap.main_bound_audit(action, p, obs, E, E, eta, n=n, sys=sys)
        rec.meta = {"scenario": ctx.scenario, "N": N}
        if not rec.inequality_ok:
            raise CMSViolation(f"main trace inequality failed at η = {eta}")
        ctx.audit.append(rec)
        ctx.series("audit", "lhs", eta, rec.lhs, xlabel="eta", ylabel="value", logx=True)
        ctx.series("audit", "q_term", eta, rec.q_term, xlabel="eta", ylabel="value", logx=True)


def scenario_free_qe(ctx):
    rank = int(ctx.params.get("rank", 2))
    model = lr.RegularTree(2 * rank)
    for N in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                action = ac.random_free_action(N, rank, seed)
                p = adjacency_symbol(action.spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N))
            with _timed(ctx, "statistics"):
                _qe_rows(ctx, sys, obs, action, N, seed)
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)
            if N == min(ctx.config["sizes"]) and seed == ctx.config["seeds"][0]:
                with _timed(ctx, "audit"):
                    _audits(ctx, action, p, obs, sys, N)


def scenario_free_mixing(ctx):
    rank = int(ctx.params.get("rank", 2))
    model = lr.RegularTree(2 * rank)
    pairs = ctx.params.get("energies", [[0.0, 0.0], [0.0, 1.0], [-1.5, 1.5]])
    for N in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                action = ac.random_free_action(N, rank, seed)
                p = adjacency_symbol(action.spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N))
            with _timed(ctx, "statistics"):
                K0 = qs.centered_matrix(obs, action)
                for E1, E2 in pairs:
                    for eta in ctx.config["eta_ladder"]:
                        v = qs.moment_LIJ(sys, K0, (E1 - eta, E1 + eta), (E2 - eta, E2 + eta))
                        ctx.row("qm", v, N=N, seed=seed, E1=E1, E2=E2, eta=eta,
                                count=spc.count(sys, (E1 - eta, E1 + eta)))
                        if seed == ctx.config["seeds"][0]:
                            ctx.series("qm_vs_eta", f"N={N} E=({E1:g},{E2:g})", eta, v,
                                       xlabel="eta", ylabel="qm", logx=True)
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)
            if N == ctx.params.get("audit_size", min(ctx.config["sizes"])) and seed == ctx.config["seeds"][0]:
                with _timed(ctx, "audit"):
                    _audits(ctx, action, p, obs, sys, N)


def _k3k3():
    return gc.free_product([gc.cyclic_table(3)] * 2)


def scenario_freeproduct(ctx):
    spec = _k3k3()
    model = lr.FreeProduct(spec)
    Es = ctx.params.get("ac_energies", list(np.round(np.linspace(-1.5, 3.5, 11), 6)))
    with _timed(ctx, "limit"):
        for E in Es:
            for eta in ctx.config["eta_ladder"]:
                z = complex(E, eta)
                ctx.row("ac", float(model.solve_diag(z).imag), E1=E, eta=eta)
                zz = abs(model.zeta(0, 1, z) * model.zeta(1, 1, z)) ** 2
                ctx.row("zeta_product", zz, E1=E, eta=eta)
            ctx.series("density", "Im R(e,e)/π", E, model.density(E, min(ctx.config["eta_ladder"])),
                       xlabel="E", ylabel="density")
        for E in ctx.params.get("moment_energies", [0.0, 2.0]):
            for eta in ctx.config["eta_ladder"]:
                v = lr.fourth_moment(model, complex(E, eta))["value"]
                ctx.row("fourth_moment", v, E1=E, eta=eta)
                ctx.series("fourth_moment", f"E={E:g}", eta, v, xlabel="eta", ylabel="moment", logx=True, logy=True)
    for N in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                action = ac.finite_factor_random_action(spec, N, seed)
                p = adjacency_symbol(spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N))
            with _timed(ctx, "statistics"):
                _qe_rows(ctx, sys, obs, action, N, seed)
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)


DIAGRAMS = {
    "K33": (6, [(i, j) for i in range(3) for j in range(3, 6)]),
    "C4": (4, [(0, 1), (1, 2), (2, 3), (3, 0)]),
    "C5": (5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]),
    "P4": (4, [(0, 1), (1, 2), (2, 3)]),
}


def scenario_racg(ctx):
    for i, (name, (n, edges)) in enumerate(DIAGRAMS.items()):
        ok, _ = gc.is_superflexible(gc.racg(n, edges))
        ctx.row(f"superflexible:{name}", float(ok), count=n)
    spec = gc.racg(*DIAGRAMS["K33"])
    model = lr.ProductModel(lr.RegularTree(3), lr.RegularTree(3), spec=spec)
    for m in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                a = ac.random_matching_action(m, 3, sub_seed(seed, 1))
                b = ac.random_matching_action(m, 3, sub_seed(seed, 2))
                action = ac.product_action(a, b, spec)
                p = adjacency_symbol(spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            N = action.N
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N))
            with _timed(ctx, "statistics"):
                _qe_rows(ctx, sys, obs, action, N, seed)
                rng = ac.make_rng(sub_seed(seed, 3))
                words = [tuple((int(g), 1) for g in rng.integers(0, 6, 12)) for _ in range(50)]
                agree = all(np.array_equal(action.perm(gc.reduce(spec, w)),
                                           _word_perm(action, w)) for w in words)
                ctx.row("word_problem", float(agree), N=N, seed=seed, count=len(words))
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)


def _word_perm(action, word):
    out = np.arange(action.N)
    for g, e in reversed(word):
        out = action.syllable_perm(g, e)[out]
    return out


BASES = {
    "diamond": "0 1\n1 2\n2 3\n3 0\n0 2",
    "theta": "0 1\n0 1\n0 1\n1 2\n2 2",
}


def scenario_lift(ctx):
    base = ac.BaseGraph.parse(BASES[ctx.params.get("base", "diamond")])
    model = lr.TreeLift(base)
    p = ac.lift_symbol(base)
    for N in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                action = ac.lift_action(base, N, seed)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N), r=base.r)
            with _timed(ctx, "statistics"):
                _qe_rows(ctx, sys, obs, action, N * base.r, seed)
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)


def scenario_torus(ctx):
    energies = ctx.params.get("energies", [0.0, 0.5])
    qe_I = tuple(ctx.params.get("qe_interval", [-1.5, 1.5]))
    for d in ctx.params.get("dims", [1, 2]):
        model = lr.Lattice(d)
        for M in ctx.config["sizes"]:
            with _timed(ctx, "spectra"):
                action = ac.torus_action(M, d)
                p = adjacency_symbol(action.spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            N = action.N
            obs = make_observable(ctx.config["observable"], action, 0)
            with _timed(ctx, "statistics"):
                K0 = qs.centered_matrix(obs, action)
                for E in energies:
                    for eta in ctx.config["eta_ladder"]:
                        v = qs.moment_LIJ(sys, K0, (E - eta, E + eta), (E - eta, E + eta))
                        ctx.row(f"qm_d{d}", v, N=N, seed=M, E1=E, E2=E, eta=eta,
                                count=spc.count(sys, (E - eta, E + eta)))
                        ctx.series("qm_vs_M", f"d={d} E={E:g} η={eta:g}", M, v, xlabel="M", ylabel="qm")
                for seed in ctx.config["seeds"]:
                    iid = qs.iid_observable(N, sub_seed(seed, M, d))
                    v = qs.qe_statistic(sys, iid, action, qe_I)
                    ctx.row(f"qe_iid_d{d}", v, N=N, seed=seed, lo=qe_I[0], hi=qe_I[1], count=spc.count(sys, qe_I))
                    ctx.series("qe_iid_vs_M", f"d={d} seed {seed}", M, v, xlabel="M", ylabel="qe", logy=True)
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, M)
            if d == 1 and M == max(ctx.config["sizes"]):
                with _timed(ctx, "audit"):
                    _audits(ctx, action, p, obs, sys, N)
    # a long cycle is where the counting bracket stops being trivial
    M = int(ctx.params.get("showcase_M", 400))
    if M:
        with _timed(ctx, "cms"):
            action = ac.torus_action(M, 1)
            p = adjacency_symbol(action.spec)
            sys = spc.eigendecompose(ac.representation_matrix(action, p))
            ctx.cms_check(sys, lr.Lattice(1), action, p, M, M, ns=[(M - 1) // 2], intervals=[[-1.0, 1.0]])


BUTTERFLY = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2)]


def butterfly_matrix() -> np.ndarray:
    F = np.zeros((5, 5))
    for a, b in BUTTERFLY:
        F[a, b] = F[b, a] = 1.0
    return F


def scenario_butterfly(ctx):
    F = butterfly_matrix()
    model = lr.CartesianConvolution(F, lr.Lattice(1), "tensor")
    spec = gc.integer_lattice(1)
    p = AlgebraElement(spec, {gc.generator(spec, 0, 1): F, gc.generator(spec, 0, -1): F}, 5)
    with _timed(ctx, "limit"):
        for E in ctx.params.get("moment_energies", [1.0]):
            for eta in ctx.config["eta_ladder"]:
                v = lr.fourth_moment(model, complex(E, eta))["value"]
                ctx.row("fourth_moment", v, E1=E, eta=eta)
                ctx.series("fourth_moment", f"E={E:g}", eta, v, xlabel="eta", ylabel="moment", logx=True, logy=True)
    for M in ctx.config["sizes"]:
        with _timed(ctx, "spectra"):
            action = ac.torus_action(M, 1)
            sys = spc.eigendecompose(ac.representation_matrix(action, p))
        for seed in ctx.config["seeds"]:
            obs = qs.iid_observable(M, sub_seed(seed, M), r=5)
            with _timed(ctx, "statistics"):
                _qe_rows(ctx, sys, obs, action, 5 * M, seed)
        with _timed(ctx, "cms"):
            ctx.cms_check(sys, model, action, p, M, 0)


def scenario_c4(ctx):
    F = qs.C4_BASIS @ np.diag(qs.C4_EIGENVALUES) @ qs.C4_BASIS.T
    model = lr.CartesianConvolution(F, lr.RegularTree(4), "cartesian")
    for n in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                G = ac.random_free_action(n, 2, seed)
                sG = spc.eigendecompose(ac.representation_matrix(G, adjacency_symbol(G.spec)))
                lam = (qs.C4_EIGENVALUES[:, None] + sG.eigenvalues[None, :]).ravel()
                V = np.einsum("ik,xj->ixkj", qs.C4_BASIS, sG.eigenvectors).reshape(4 * n, 4 * n)
                sep = spc.from_arrays(lam, V, None, separated=True)
                spec = G.spec
                sup = {spec.identity: F}
                for s in gc.standard_generators(spec).generators:
                    sup[s] = np.eye(4)
                p = AlgebraElement(spec, sup, 4)
                full = spc.eigendecompose(ac.representation_matrix(G, p), rerandomize=True, seed=seed)
            a = qs.c4_sign_observable(n).diagonal_vector()
            with _timed(ctx, "statistics"):
                v_sep = qs.qe_diagonal_form(sep, a, (-np.inf, np.inf))
                v_gen = qs.qe_diagonal_form(full, a, (-np.inf, np.inf))
                ctx.row("c4_separated", v_sep, N=4 * n, seed=seed, count=4 * n)
                ctx.row("c4_generic", v_gen, N=4 * n, seed=seed, count=4 * n)
                ctx.series("c4", "separated basis", n, v_sep, xlabel="n", ylabel="statistic")
                ctx.series("c4", "rerandomised basis", n, v_gen, xlabel="n", ylabel="statistic")
            with _timed(ctx, "cms"):
                ctx.cms_check(full, model, G, p, n, seed)


def scenario_glued(ctx):
    d = int(ctx.params.get("degree", 8))
    if d < 8:
        raise ConfigError("glued-copies needs degree ≥ 8 (four copies)")
    model = lr.RegularTree(d)
    for n in ctx.config["sizes"]:
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                Fa = ac.random_free_action(n, d // 2, seed)
                action = ac.glued_copies_action(Fa, d, seed)
                p = adjacency_symbol(action.spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            N = action.N
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N))
            iid = qs.iid_observable(N, sub_seed(seed, N, 1))
            with _timed(ctx, "statistics"):
                _qe_rows(ctx, sys, obs, action, N, seed)
                _qe_rows(ctx, sys, iid, action, N, seed, kind="qe_iid")
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)


def scenario_rate(ctx):
    rank = int(ctx.params.get("rank", 2))
    C = float(ctx.params.get("C", 1.0))
    model = lr.RegularTree(2 * rank)
    energies = ctx.params.get("energies", [0.0])
    for N in ctx.config["sizes"]:
        eta = C * math.log(math.log(N)) / math.log(N)
        ctx.row("eta_N", eta, N=N)
        for seed in ctx.config["seeds"]:
            with _timed(ctx, "spectra"):
                action = ac.random_free_action(N, rank, seed)
                p = adjacency_symbol(action.spec)
                sys = spc.eigendecompose(ac.representation_matrix(action, p))
            obs = make_observable(ctx.config["observable"], action, sub_seed(seed, N))
            with _timed(ctx, "statistics"):
                K0 = qs.centered_matrix(obs, action)
                for E in energies:
                    J = (E - eta, E + eta)
                    qm = qs.moment_LIJ(sys, K0, J, J)
                    qe = qs.moment_L_tau_eta(sys, K0, J, 0.0, 0.0)
                    k = spc.count(sys, J)
                    ctx.row("qm", qm, N=N, seed=seed, E1=E, E2=E, eta=eta, count=k)
                    ctx.row("qe", qe, N=N, seed=seed, E1=E, eta=eta, lo=J[0], hi=J[1], count=k)
                    ctx.row("qm_over_eta", qm / eta, N=N, seed=seed, E1=E, E2=E, eta=eta, count=k)
                    ctx.series("rate", f"qe seed {seed}", eta, qe, xlabel="eta_N", ylabel="statistic", logy=True)
            with _timed(ctx, "cms"):
                ctx.cms_check(sys, model, action, p, N, seed)


@dataclass(frozen=True)
class Scenario:
    name: str
    run: object
    description: str
    defaults: dict
    observables: tuple


def _d(sizes, seeds, etas, intervals, obs, params=None, budget=600):
    return {"sizes": sizes, "seeds": seeds, "eta_ladder": etas, "intervals": intervals,
            "observable": obs, "params": params or {}, "budget_seconds": budget}


IID = {"kind": "iid", "law": "pm1"}
SCENARIOS = {s.name: s for s in [
    Scenario("free-qe", scenario_free_qe, "QE decay on random 4-regular Schreier graphs",
             _d([500, 1000, 2000, 4000], [0, 1, 2, 3, 4], [1.0, 0.5, 0.25], [[-1.5, 1.5]], IID),
             ("iid", "cycle_sign")),
    Scenario("free-mixing", scenario_free_mixing, "small-scale QM moments and the audited trace bound",
             _d([500, 1000, 2000], [0, 1], [0.4, 0.2, 0.1], [[-1.0, 1.0]], IID, {"audit_size": 1000}),
             ("iid", "cycle_sign")),
    Scenario("freeproduct-K3K3", scenario_freeproduct, "AC scan, ζ contraction, fourth moment and QE on K3*K3",
             _d([600, 1200, 2400], [0, 1, 2], [0.2, 0.1, 0.05, 0.025], [[-1.0, 1.0], [1.5, 3.0]], IID),
             ("iid",)),
    Scenario("racg-superflex-check", scenario_racg, "superflexibility of small diagrams and QE on Z2^{*3}×Z2^{*3}",
             _d([20, 30, 40], [0, 1], [0.1], [[-2.0, 2.0]], IID, {"cms_n": [1, 2]}),
             ("iid",)),
    Scenario("lift-qe", scenario_lift, "QE on random N-lifts of a fixed base graph",
             _d([200, 400, 800], [0, 1, 2], [0.1], [[-1.0, 1.0]], IID),
             ("iid",)),
    Scenario("torus-mixing-failure", scenario_torus, "Fourier observables on tori: QM fails, QE holds",
             _d([20, 40, 80], [0, 1, 2], [1.0], [[-1.5, 1.5], [0.5, 1.5]], {"kind": "fourier", "u": [1, 0]},
                {"cms_n": [2, 5, 10]}),
             ("fourier",)),
    Scenario("butterfly-tensor", scenario_butterfly, "butterfly graph tensored with Z: fourth moment and QE",
             _d([100, 200, 400], [0, 1, 2], [0.2, 0.1, 0.05, 0.025], [[0.3, 1.5], [2.3, 2.9]], IID,
                {"cms_n": [2, 5, 10]}),
             ("iid",)),
    Scenario("c4-box", scenario_c4, "C4 × G_n with the separated eigenbasis and the sign observable",
             _d([200], [0], [0.1], [[-1.0, 1.0]], {"kind": "c4_sign"}),
             ("c4_sign",)),
    Scenario("glued-copies", scenario_glued, "copies of an expander glued at a hub: block observable",
             _d([100, 200, 400], [0, 1], [0.1], [[-2.0, 2.0]], {"kind": "block_indicator"}),
             ("block_indicator",)),
    Scenario("rate-scan", scenario_rate, "QE/QM at the scale η_N = C lnlnN/lnN",
             _d([500, 1000, 2000, 4000], [0, 1], [0.1], [[-1.5, 1.5]], IID),
             ("iid",)),
]}


# -- configuration ----------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(str(exc)) from exc


def validate_config(cfg: dict) -> dict:
    """Schema check, then merge with the scenario preset."""
    errs = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errs:
        raise ConfigError("; ".join(f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errs))
    name = cfg["scenario"]
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; try list-scenarios")
    sc = SCENARIOS[name]
    out = copy.deepcopy(sc.defaults)
    for k, v in cfg.items():
        if k == "params":
            out["params"].update(v)
        else:
            out[k] = copy.deepcopy(v)
    out["scenario"] = name
    out.setdefault("output_dir", f"runs/{name}")
    for lo, hi in out["intervals"]:
        if not lo < hi:
            raise ConfigError(f"interval [{lo}, {hi}] is empty")
    if out["observable"]["kind"] not in sc.observables:
        raise ConfigError(f"observable {out['observable']['kind']!r} is not available for {name}")
    if name == "freeproduct-K3K3" and any(N % 3 for N in out["sizes"]):
        raise ConfigError("K3*K3 sizes must be multiples of 3")
    if name in ("free-qe", "free-mixing", "rate-scan") and any(N < 4 for N in out["sizes"]):
        raise ConfigError("sizes must be at least 4")
    if name == "racg-superflex-check" and any(m % 2 for m in out["sizes"]):
        raise ConfigError("matching actions need even sizes")
    return out


# -- output ----------------------------------------------------------------------------------

def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) if not isinstance(r.get(f), str) else r[f] for f in fields])


def svg_line_chart(series: dict, path, title="", xlabel="", ylabel="", logx=False, logy=False,
                   width=640, height=400) -> None:
    """A plain SVG line chart; non-positive values are dropped on log axes."""
    pad_l, pad_r, pad_t, pad_b = 70, 170, 36, 50
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float
    pts = {}
    for name, (xs, ys) in series.items():
        pts[name] = [(tx(x), ty(y)) for x, y in zip(xs, ys)
                     if (not logx or x > 0) and (not logy or y > 0) and math.isfinite(y)]
    allp = [q for v in pts.values() for q in v]
    if not allp:
        allp = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    W, H = width - pad_l - pad_r, height - pad_t - pad_b
    X = lambda v: pad_l + (v - x0) / (x1 - x0) * W
    Y = lambda v: pad_t + H - (v - y0) / (y1 - y0) * H
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{W}" height="{H}" fill="none" stroke="black"/>']
    for i in range(5):
        vx = x0 + (x1 - x0) * i / 4
        vy = y0 + (y1 - y0) * i / 4
        lx = f"{10 ** vx:.3g}" if logx else f"{vx:.3g}"
        ly = f"{10 ** vy:.3g}" if logy else f"{vy:.3g}"
        out.append(f'<text x="{X(vx):.1f}" y="{pad_t + H + 16}" text-anchor="middle">{lx}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{Y(vy) + 4:.1f}" text-anchor="end">{ly}</text>')
    out.append(f'<text x="{pad_l + W / 2:.0f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{pad_t + H / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {pad_t + H / 2:.0f})">{_esc(ylabel)}</text>')
    for k, (name, p) in enumerate(pts.items()):
        c = colors[k % len(colors)]
        if p:
            d = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in p)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{d}"/>')
            out.extend(f'<circle cx="{X(a):.1f}" cy="{Y(b):.1f}" r="2.5" fill="{c}"/>' for a, b in p)
        ly = pad_t + 14 * k + 8
        out.append(f'<line x1="{pad_l + W + 10}" y1="{ly}" x2="{pad_l + W + 28}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + W + 32}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def run_config(cfg: dict, out_dir=None) -> dict:
    """Run a validated (or raw) config; returns the meta record."""
    cfg = validate_config(cfg)
    if out_dir is not None:
        cfg["output_dir"] = str(out_dir)
    out = Path(cfg["output_dir"])
    (out / "plots").mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg["scenario"], cfg)
    t0 = time.time()
    SCENARIOS[cfg["scenario"]].run(ctx)
    _write_csv(out / "results.csv", RESULT_FIELDS, ctx.rows)
    _write_csv(out / "cms.csv", CMS_FIELDS, ctx.cms)
    ap.write_audit_jsonl(ctx.audit, out / "audit.jsonl")
    for name, p in sorted(ctx.plots.items()):
        opts = {k: v for k, v in p.items() if k != "series"}
        svg_line_chart(p["series"], out / "plots" / f"{name}.svg", title=f"{cfg['scenario']}: {name}", **opts)
    blob = json.dumps(cfg, sort_keys=True).encode()
    meta = {"scenario": cfg["scenario"], "config": cfg, "config_sha256": hashlib.sha256(blob).hexdigest(),
            "seeds": cfg["seeds"], "versions": {"qmix": __version__, "numpy": np.__version__,
                                                "scipy": scipy.__version__, "python": platform.python_version()},
            "timing": {k: round(v, 3) for k, v in ctx.timing.items()},
            "elapsed_seconds": round(time.monotonic() - ctx.start, 3),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t0)),
            "rows": len(ctx.rows), "cms_checks": len(ctx.cms),
            "cms_all_inside": all(r["inside"] for r in ctx.cms)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
