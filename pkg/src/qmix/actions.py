"""Permutation actions ρ_N, Schreier operators ρ_N(p) and Bad-set diagnostics.

Convention: ``perm[x] = g.x`` and the permutation matrix is
ρ_N(g)(x, y) = 1(x = g.y).  For block symbols the operator acts on
C^r ⊗ C^N and the point (i, x) sits at index ``i*N + x``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_bipartite_matching

from . import group_core as gc
from .group_algebra import AlgebraElement
from .group_core import GeneratingSet, GroupElement, GroupSpec


class ActionError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a single 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def _compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Permutation of x ↦ a(b(x))."""
    return a[b]


def _inv(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    out[a] = np.arange(a.size)
    return out


def _power(a: np.ndarray, k: int) -> np.ndarray:
    if k < 0:
        a, k = _inv(a), -k
    out = np.arange(a.size)
    base = a
    while k:
        if k & 1:
            out = base[out]
        base = base[base]
        k >>= 1
    return out


class PermutationAction:
    """An action of ``spec`` on [N] given by generator permutations.

    ``perms`` holds one array per generator; for free products it holds,
    per factor, a ``(|Γ_i|, N)`` array with one permutation per element."""

    def __init__(self, spec: GroupSpec, N: int, perms: Sequence, meta: dict | None = None):
        self.spec = spec
        self.N = int(N)
        self.meta = dict(meta or {})
        if spec.variant == gc.FREE_PRODUCT:
            self.perms = [np.asarray(p, dtype=np.int64).reshape(t.shape[0], self.N)
                          for p, t in zip(perms, spec.tables)]
        else:
            self.perms = [np.asarray(p, dtype=np.int64) for p in perms]
        if len(self.perms) != spec.rank:
            raise ActionError(f"expected {spec.rank} generator permutations, got {len(self.perms)}")
        for p in self.perms:
            p.setflags(write=False)
        self._validate()
        self._inv = None

    def _validate(self):
        ident = np.arange(self.N)
        flat = [q for p in self.perms for q in (p if p.ndim == 2 else [p])]
        for q in flat:
            if q.shape != (self.N,) or not np.array_equal(np.sort(q), ident):
                raise ActionError("generator image is not a bijection of [N]")
        v = self.spec.variant
        if v == gc.LATTICE:
            for a in self.perms:
                for b in self.perms:
                    if not np.array_equal(a[b], b[a]):
                        raise ActionError("lattice generators must commute")
        elif v == gc.RACG:
            for s, a in enumerate(self.perms):
                if not np.array_equal(a[a], ident):
                    raise ActionError("RACG generators must act as involutions")
                for t in range(s + 1, self.spec.rank):
                    b = self.perms[t]
                    if self.spec.commute(s, t) and not np.array_equal(a[b], b[a]):
                        raise ActionError(f"generators {s},{t} must commute")
        elif v == gc.FREE_PRODUCT:
            for P, T in zip(self.perms, self.spec.tables):
                if not np.array_equal(P[0], ident):
                    raise ActionError("identity of a factor must act trivially")
                n = T.shape[0]
                for a in range(n):
                    for b in range(n):
                        if not np.array_equal(P[T[a, b]], P[a][P[b]]):
                            raise ActionError("factor table relation violated")

    # -- evaluation -------------------------------------------------------
    def syllable_perm(self, g: int, e: int) -> np.ndarray:
        v = self.spec.variant
        if v == gc.FREE_PRODUCT:
            return self.perms[g][e]
        if v == gc.RACG:
            return self.perms[g] if e % 2 else np.arange(self.N)
        return _power(self.perms[g], e)

    def perm(self, g: GroupElement) -> np.ndarray:
        """Array π with π[x] = g.x."""
        if g.spec != self.spec:
            raise ActionError("element from another group")
        out = np.arange(self.N)
        for s, e in reversed(g.word):
            out = self.syllable_perm(s, e)[out]
        return out

    def act(self, g: GroupElement, x: int) -> int:
        if not 0 <= x < self.N:
            raise ActionError(f"point {x} outside [0, {self.N})")
        for s, e in reversed(g.word):
            x = int(self.syllable_perm(s, e)[x])
        return x

    def matrix(self, g: GroupElement) -> sp.csr_matrix:
        pi = self.perm(g)
        return sp.csr_matrix((np.ones(self.N), (pi, np.arange(self.N))), shape=(self.N, self.N))

    # -- serialisation ----------------------------------------------------
    def to_json(self) -> dict:
        return {"group": self.spec.to_json(), "N": self.N,
                "perms": [p.tolist() for p in self.perms], "meta": self.meta}

    @classmethod
    def from_json(cls, d) -> "PermutationAction":
        if isinstance(d, str):
            d = json.loads(d)
        return cls(GroupSpec.from_json(d["group"]), d["N"], d["perms"], d.get("meta"))


@dataclass
class SchreierOperator:
    action: PermutationAction
    symbol: AlgebraElement
    matrix: sp.csr_matrix
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        m = self.matrix.toarray()
        return m.real.copy() if not np.iscomplexobj(m) or not np.any(m.imag) else m

    def asymmetry(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0


def representation_matrix(action: PermutationAction, p: AlgebraElement) -> SchreierOperator:
    """ρ_N(p) = Σ_g p_g ⊗ ρ_N(g) as a sparse matrix of size N·r."""
    if p.spec != action.spec:
        raise ActionError("symbol and action live on different groups")
    N, r = action.N, p.r
    rows, cols, vals = [], [], []
    ys = np.arange(N)
    for g, c in p.support.items():
        xs = action.perm(g)
        for i in range(r):
            for j in range(r):
                if c[i, j] != 0:
                    rows.append(i * N + xs)
                    cols.append(j * N + ys)
                    vals.append(np.full(N, c[i, j]))
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    m = sp.coo_matrix((vals, (rows, cols)), shape=(N * r, N * r)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    if m.nnz and not np.any(m.data.imag):
        m = m.real.tocsr()
    return SchreierOperator(action, p, m)


# -- fixed points and Bad sets ---------------------------------------------

def fixed_points(action: PermutationAction, g: GroupElement) -> np.ndarray:
    return np.flatnonzero(action.perm(g) == np.arange(action.N))


def _ball_perms(action: PermutationAction, S: GeneratingSet | None, R: int):
    """Yield (length, permutation) over B_S(R)\\{e}, one per group element."""
    spec = action.spec
    gens = (S or gc.standard_generators(spec)).generators
    gperm = [action.perm(s) for s in gens]
    seen = {spec.identity}
    frontier = [(spec.identity, np.arange(action.N))]
    for k in range(1, R + 1):
        nxt = []
        for h, ph in frontier:
            for s, ps in zip(gens, gperm):
                g = gc.multiply(s, h)
                if g in seen:
                    continue
                seen.add(g)
                pg = ps[ph]
                nxt.append((g, pg))
                yield k, pg
        frontier = nxt


def min_fix_length(action: PermutationAction, S: GeneratingSet | None, R: int) -> np.ndarray:
    """For each x the shortest |g| ≤ R, g ≠ e, with g.x = x (inf if none)."""
    out = np.full(action.N, np.inf)
    ident = np.arange(action.N)
    for k, pg in _ball_perms(action, S, R):
        fix = pg == ident
        out[fix] = np.minimum(out[fix], k)
    return out


def bad_set(action: PermutationAction, S: GeneratingSet | None, n: int) -> np.ndarray:
    """Bad_S(n) = ∪_{g ∈ B_S(2n)\\{e}} Fix_N(g)."""
    if n < 0:
        raise ActionError("n must be nonnegative")
    if n == 0:
        return np.array([], dtype=np.int64)
    return np.flatnonzero(min_fix_length(action, S, 2 * n) <= 2 * n)


def bs_profile(action: PermutationAction, S: GeneratingSet | None, r_max: int) -> np.ndarray:
    """|Bad_S(n)|/N for n = 0..r_max."""
    m = min_fix_length(action, S, 2 * r_max)
    return np.array([np.mean(m <= 2 * n) if n else 0.0 for n in range(r_max + 1)])


# -- constructors -------------------------------------------------------------

def torus_action(M: int, d: int) -> PermutationAction:
    """Z^d acting on (Z/MZ)^d by unit shifts; points flattened in C order."""
    spec = gc.integer_lattice(d)
    idx = np.arange(M ** d).reshape((M,) * d)
    perms = []
    for i in range(d):
        shifted = np.roll(idx, 1, axis=i)  # shifted[n] = idx[n - e_i]
        pi = np.empty(M ** d, dtype=np.int64)
        pi[shifted.ravel()] = idx.ravel()  # pi[n - e_i] = n, i.e. e_i.x = x + e_i
        perms.append(pi)
    return PermutationAction(spec, M ** d, perms, {"kind": "torus", "M": M, "d": d})


def torus_coords(action: PermutationAction) -> np.ndarray:
    M, d = action.meta["M"], action.meta["d"]
    return np.stack(np.unravel_index(np.arange(action.N), (M,) * d), axis=1)


def random_free_action(N: int, d: int, seed: int) -> PermutationAction:
    rng = make_rng(seed)
    perms = [rng.permutation(N) for _ in range(d)]
    return PermutationAction(gc.free_group(d), N, perms, {"kind": "random_free", "seed": seed})


def random_matching_action(N: int, k: int, seed: int, spec: GroupSpec | None = None) -> PermutationAction:
    """k independent uniform fixed-point-free involutions of [N] (N even)."""
    if N % 2:
        raise ActionError("random matchings need N even")
    spec = spec or gc.z2_free_product(k)
    rng = make_rng(seed)
    perms = []
    for _ in range(k):
        o = rng.permutation(N)
        inv = np.empty(N, dtype=np.int64)
        inv[o[0::2]] = o[1::2]
        inv[o[1::2]] = o[0::2]
        if spec.variant == gc.FREE_PRODUCT:
            perms.append(np.stack([np.arange(N), inv]))
        else:
            perms.append(inv)
    return PermutationAction(spec, N, perms, {"kind": "random_matching", "seed": seed})


def finite_factor_random_action(spec_or_tables, N: int, seed: int) -> PermutationAction:
    """Each factor acts regularly on Γ_i × [N/|Γ_i|], conjugated by an
    independent uniform permutation of [N]."""
    spec = spec_or_tables if isinstance(spec_or_tables, GroupSpec) else gc.free_product(spec_or_tables)
    rng = make_rng(seed)
    perms = []
    for T in spec.tables:
        n = T.shape[0]
        if N % n:
            raise ActionError(f"factor order {n} does not divide N={N}")
        m = N // n
        h, j = np.divmod(np.arange(N), m)
        reg = np.stack([T[a][h] * m + j for a in range(n)])
        sigma = rng.permutation(N)
        sinv = _inv(sigma)
        perms.append(np.stack([sigma[reg[a][sinv]] for a in range(n)]))
    return PermutationAction(spec, N, perms, {"kind": "finite_factor_random", "seed": seed})


@dataclass(frozen=True)
class BaseGraph:
    """A finite base graph on r vertices with d oriented edges (u_i, v_i)."""
    r: int
    edges: tuple

    @classmethod
    def parse(cls, text: str, r: int | None = None) -> "BaseGraph":
        edges = []
        for line in text.splitlines():
            line = line.split("#")[0].strip()
            if line:
                u, v = map(int, line.split()[:2])
                edges.append((u, v))
        r = r if r is not None else 1 + max(max(e) for e in edges)
        return cls(r, tuple(edges))

    @classmethod
    def read(cls, path) -> "BaseGraph":
        with open(path) as fh:
            return cls.parse(fh.read())

    def dumps(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges)

    def adjacency(self, weights=None) -> np.ndarray:
        a = np.ones(len(self.edges)) if weights is None else np.asarray(weights)
        A = np.zeros((self.r, self.r), complex)
        for (u, v), w in zip(self.edges, a):
            A[u, v] += w
            A[v, u] += np.conj(w)
        return A


def lift_action(base: BaseGraph, N: int, seed: int) -> PermutationAction:
    rng = make_rng(seed)
    perms = [rng.permutation(N) for _ in base.edges]
    return PermutationAction(gc.free_group(len(base.edges)), N, perms,
                             {"kind": "lift", "seed": seed, "r": base.r,
                              "base_edges": [list(e) for e in base.edges]})


def lift_symbol(base: BaseGraph, weights=None) -> AlgebraElement:
    """p = Σ_i a_i E_{u_i v_i} g_i + ā_i E_{v_i u_i} g_i⁻¹ in M_r(C)[F_d]."""
    spec = gc.free_group(len(base.edges))
    a = np.ones(len(base.edges)) if weights is None else np.asarray(weights, dtype=complex)
    sup = {}
    for i, ((u, v), w) in enumerate(zip(base.edges, a)):
        E = np.zeros((base.r, base.r), complex)
        E[u, v] = w
        sup[gc.generator(spec, i, 1)] = E
        sup[gc.generator(spec, i, -1)] = E.conj().T
    return AlgebraElement(spec, sup, base.r)


def _two_factorization(n: int, edges: list[tuple[int, int]], k: int, rng) -> list[np.ndarray]:
    """Split a 2k-regular multigraph into k permutations whose Schreier
    graph is the given graph (Petersen: Euler orientation + matchings)."""
    G = nx.MultiGraph()
    G.add_nodes_from(range(n))
    order = rng.permutation(len(edges))
    G.add_edges_from(edges[i] for i in order)
    arcs = []
    for comp in nx.connected_components(G):
        H = G.subgraph(comp)
        if H.number_of_edges() == 0:
            continue
        start = int(rng.choice(sorted(comp)))
        arcs.extend((u, v) for u, v in nx.eulerian_circuit(H, source=start))
    cnt = sp.coo_matrix((np.ones(len(arcs)), tuple(np.array(arcs).T)), shape=(n, n)).tocsr()
    cnt.sum_duplicates()
    perms = []
    for _ in range(k):
        pattern = cnt.copy()
        pattern.data = (pattern.data > 0).astype(float)
        pattern.eliminate_zeros()
        match = maximum_bipartite_matching(pattern, perm_type="column")
        if np.any(match < 0):
            raise ActionError("graph is not regular of even degree")
        perms.append(match.astype(np.int64))
        cnt = cnt - sp.csr_matrix((np.ones(n), (np.arange(n), match)), shape=(n, n))
        cnt.eliminate_zeros()
    return perms


def schreier_edges(action: PermutationAction) -> list[tuple[int, int]]:
    """Undirected edges {x, s.x}, one per free generator and point."""
    return [(int(x), int(y)) for p in action.perms for x, y in enumerate(p)]


def glued_copies_action(F_action: PermutationAction, d: int, seed: int) -> PermutationAction:
    """d/2 copies of F'_N (F_N minus one edge) joined through a hub vertex.

    ``F_action`` is an action of the free group of rank d/2, so its
    Schreier graph F_N is d-regular.  The deleted edge is the
    lexicographically smallest non-loop edge; it is recorded in ``meta``."""
    if d % 2 or F_action.spec.variant != gc.FREE or 2 * F_action.spec.rank != d:
        raise ActionError("need an action of the free group of rank d/2 with d even")
    N = F_action.N
    edges = schreier_edges(F_action)
    norm = sorted((min(e), max(e)) for e in edges if e[0] != e[1])
    cut = norm[0]
    removed = False
    base = []
    for e in edges:
        if not removed and (min(e), max(e)) == cut:
            removed = True
            continue
        base.append(e)
    k = d // 2
    hub = k * N
    all_edges = []
    for c in range(k):
        off = c * N
        all_edges.extend((u + off, v + off) for u, v in base)
        all_edges.append((hub, cut[0] + off))
        all_edges.append((hub, cut[1] + off))
    rng = make_rng(seed)
    perms = _two_factorization(k * N + 1, all_edges, k, rng)
    meta = {"kind": "glued_copies", "seed": seed, "copies": k, "copy_size": N,
            "hub": hub, "deleted_edge": list(cut)}
    return PermutationAction(gc.free_group(k), k * N + 1, perms, meta)


def product_action(a: PermutationAction, b: PermutationAction, spec: GroupSpec) -> PermutationAction:
    """Action of a RACG direct product on [N_a]×[N_b]: generators of ``a``
    act on the first coordinate, those of ``b`` on the second.  ``spec``
    must list a's generators first."""
    Na, Nb = a.N, b.N
    x, y = np.divmod(np.arange(Na * Nb), Nb)

    def flat(P):
        return P if P.ndim == 1 else P[-1]

    perms = [flat(p)[x] * Nb + y for p in a.perms] + [x * Nb + flat(p)[y] for p in b.perms]
    return PermutationAction(spec, Na * Nb, perms, {"kind": "product", "factors": [Na, Nb]})
