"""Finitely generated groups with normal forms, word lengths and balls.

Four families are supported: free groups, free products of finite groups
given by multiplication tables, integer lattices and right-angled Coxeter
groups (RACG).  Elements are stored as tuples of syllables ``(gen, exp)``:

* FreeGroup: ``gen`` is a free generator, ``exp`` a nonzero power, adjacent
  syllables carry different generators.
* IntegerLattice: one syllable per nonzero coordinate, sorted by ``gen``.
* FreeProductFinite: ``gen`` is a factor index and ``exp`` a non-identity
  element of that factor (an index into its table); adjacent syllables come
  from different factors.
* RACG: ``exp`` is always 1; the word is the ShortLex-least representative
  of its commutation class.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FREE = "FreeGroup"
FREE_PRODUCT = "FreeProductFinite"
LATTICE = "IntegerLattice"
RACG = "RACG"
VARIANTS = (FREE, FREE_PRODUCT, LATTICE, RACG)


class GroupError(ValueError):
    """Raised on invalid group data or mismatched arguments."""


def _check_table(table: np.ndarray) -> None:
    n = table.shape[0]
    if table.shape != (n, n):
        raise GroupError("multiplication table must be square")
    if table.min() < 0 or table.max() >= n:
        raise GroupError("table entries out of range")
    ar = np.arange(n)
    if not (np.array_equal(table[0], ar) and np.array_equal(table[:, 0], ar)):
        raise GroupError("element 0 must be the identity")
    for row in table:
        if len(set(row.tolist())) != n:
            raise GroupError("table rows must be permutations (inverses)")
    # (ab)c == a(bc) for all triples, vectorised
    lhs = table[table[:, :, None], ar[None, None, :]]
    rhs = table[ar[:, None, None], table[None, :, :]]
    if not np.array_equal(lhs, rhs):
        raise GroupError("table is not associative")


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """A finitely generated group.  Build it with the ``free_group``-style
    constructors below rather than directly."""

    variant: str
    rank: int = 0
    tables: tuple = ()
    gensets: tuple = ()
    commuting: tuple = ()
    _key: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise GroupError(f"unknown variant {self.variant!r}")
        if self.variant == FREE_PRODUCT:
            tabs = tuple(np.asarray(t, dtype=np.int64) for t in self.tables)
            for t in tabs:
                _check_table(t)
                t.setflags(write=False)
            object.__setattr__(self, "tables", tabs)
            object.__setattr__(self, "rank", len(tabs))
            if not self.gensets:
                gs = tuple(tuple(range(1, t.shape[0])) for t in tabs)
            else:
                gs = tuple(tuple(sorted(set(int(v) for v in g))) for g in self.gensets)
            if len(gs) != len(tabs):
                raise GroupError("one generating set per factor is required")
            for t, g in zip(tabs, gs):
                inv = _inverses(t)
                if 0 in g or any(inv[v] not in g for v in g):
                    raise GroupError("factor generating sets must be symmetric and avoid the identity")
            object.__setattr__(self, "gensets", gs)
            key = (self.variant, tuple(t.tobytes() for t in tabs), gs)
        elif self.variant == RACG:
            adj = np.asarray(self.commuting, dtype=bool)
            n = adj.shape[0] if adj.ndim == 2 else 0
            if adj.shape != (n, n) or not np.array_equal(adj, adj.T) or adj.diagonal().any():
                raise GroupError("RACG adjacency must be symmetric with false diagonal")
            object.__setattr__(self, "rank", n)
            object.__setattr__(self, "commuting", tuple(map(tuple, adj.tolist())))
            key = (self.variant, self.commuting)
        else:
            if self.rank < 0:
                raise GroupError("rank must be nonnegative")
            key = (self.variant, self.rank)
        object.__setattr__(self, "_key", key)

    def __eq__(self, other):
        return isinstance(other, GroupSpec) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    @property
    def identity(self) -> "GroupElement":
        return GroupElement(self, ())

    def commute(self, s: int, t: int) -> bool:
        return bool(self.commuting[s][t])

    def to_json(self) -> dict:
        d = {"variant": self.variant}
        if self.variant in (FREE, LATTICE):
            d["rank"] = self.rank
        elif self.variant == FREE_PRODUCT:
            d["factors"] = [
                {"order": int(t.shape[0]), "table": t.ravel().tolist(), "generators": list(g)}
                for t, g in zip(self.tables, self.gensets)
            ]
        else:
            d["n"] = self.rank
            d["edges"] = [[s, t] for s in range(self.rank) for t in range(s + 1, self.rank)
                          if self.commuting[s][t]]
        return d

    @staticmethod
    def from_json(d) -> "GroupSpec":
        if isinstance(d, str):
            d = json.loads(d)
        v = d.get("variant")
        if v == FREE:
            return free_group(d["rank"])
        if v == LATTICE:
            return integer_lattice(d["rank"])
        if v == FREE_PRODUCT:
            tabs = [np.asarray(f["table"]).reshape(f["order"], f["order"]) for f in d["factors"]]
            return free_product(tabs, [f.get("generators") for f in d["factors"]])
        if v == RACG:
            return racg(d["n"], d.get("edges", []))
        raise GroupError(f"unknown variant {v!r}")


def _inverses(table: np.ndarray) -> np.ndarray:
    return np.argmin(table, axis=1)  # the identity 0 sits where a*b = e


def free_group(d: int) -> GroupSpec:
    return GroupSpec(FREE, rank=int(d))


def integer_lattice(d: int) -> GroupSpec:
    return GroupSpec(LATTICE, rank=int(d))


def free_product(tables: Sequence, gensets: Sequence | None = None) -> GroupSpec:
    """Free product of finite groups given by multiplication tables
    (identity at index 0).  ``gensets`` defaults to all non-identity
    elements of each factor."""
    if gensets is not None and all(g is None for g in gensets):
        gensets = None
    return GroupSpec(FREE_PRODUCT, tables=tuple(tables), gensets=tuple(gensets or ()))


def racg(n: int, edges: Iterable = ()) -> GroupSpec:
    """Right-angled Coxeter group on ``n`` involutions; ``edges`` lists the
    commuting pairs (the defining diagram)."""
    adj = np.zeros((n, n), dtype=bool)
    for s, t in edges:
        if s == t or not (0 <= s < n and 0 <= t < n):
            raise GroupError(f"bad diagram edge {(s, t)}")
        adj[s, t] = adj[t, s] = True
    return GroupSpec(RACG, commuting=adj)


def cyclic_table(n: int) -> np.ndarray:
    a = np.arange(n)
    return (a[:, None] + a[None, :]) % n


def z2_free_product(k: int) -> GroupSpec:
    """Z_2 * ... * Z_2 (k factors), whose Cayley graph is the k-regular tree."""
    return free_product([cyclic_table(2)] * k)


@dataclass(frozen=True)
class GroupElement:
    spec: GroupSpec
    word: tuple

    def __mul__(self, other):
        return multiply(self, other)

    def __len__(self):
        return len(self.word)

    def __repr__(self):
        if not self.word:
            return "e"
        return "·".join(f"{g}^{e}" if e != 1 else f"{g}" for g, e in self.word)

    def to_json(self):
        return [list(s) for s in self.word]


def _letters(spec: GroupSpec, word) -> list[tuple[int, int]]:
    out = []
    for item in word:
        if isinstance(item, (tuple, list)):
            g, e = int(item[0]), int(item[1])
        else:
            g, e = int(item), 1
        if not 0 <= g < spec.rank:
            raise GroupError(f"generator index {g} invalid for {spec.variant}({spec.rank})")
        if spec.variant == FREE_PRODUCT and not 0 <= e < spec.tables[g].shape[0]:
            raise GroupError(f"element {e} invalid for factor {g}")
        out.append((g, e))
    return out


def _racg_append(spec: GroupSpec, w: list[int], s: int) -> None:
    # Tits: w·s is shorter iff some occurrence of s in w can be shuffled to
    # the end, i.e. everything after it commutes with s.
    for k in range(len(w) - 1, -1, -1):
        t = w[k]
        if t == s:
            del w[k]
            return
        if not spec.commuting[s][t]:
            break
    w.append(s)


def _racg_shortlex(spec: GroupSpec, w: list[int]) -> tuple:
    # Lexicographically least linear extension of the commutation heap:
    # repeatedly emit the smallest letter that commutes past everything
    # still in front of it.
    rest = list(w)
    out = []
    while rest:
        best = None
        for k, s in enumerate(rest):
            if best is not None and s >= rest[best]:
                continue
            if all(spec.commuting[s][t] for t in rest[:k]):
                best = k
        out.append(rest.pop(best))
    return tuple((s, 1) for s in out)


def reduce(spec: GroupSpec, word) -> GroupElement:
    """Normal form of a raw word.  Items are generator indices or
    ``(gen, exp)`` pairs; for free products ``exp`` is a factor element."""
    letters = _letters(spec, word)
    v = spec.variant
    if v == LATTICE:
        vec = np.zeros(spec.rank, dtype=np.int64)
        for g, e in letters:
            vec[g] += e
        return GroupElement(spec, tuple((i, int(x)) for i, x in enumerate(vec) if x))
    if v == RACG:
        w: list[int] = []
        for g, e in letters:
            if e % 2:
                _racg_append(spec, w, g)
        return GroupElement(spec, _racg_shortlex(spec, w))
    stack: list[list[int]] = []
    for g, e in letters:
        if v == FREE and e == 0:
            continue
        if v == FREE_PRODUCT and e == 0:
            continue
        if stack and stack[-1][0] == g:
            if v == FREE:
                stack[-1][1] += e
                if stack[-1][1] == 0:
                    stack.pop()
            else:
                prod = int(spec.tables[g][stack[-1][1], e])
                if prod == 0:
                    stack.pop()
                else:
                    stack[-1][1] = prod
        else:
            stack.append([g, e])
    return GroupElement(spec, tuple((g, e) for g, e in stack))


def element(spec: GroupSpec, *word) -> GroupElement:
    return reduce(spec, word)


def generator(spec: GroupSpec, i: int, exp: int = 1) -> GroupElement:
    return reduce(spec, [(i, exp)])


def _check_same(a: GroupElement, b: GroupElement) -> None:
    if a.spec != b.spec:
        raise GroupError("group elements belong to different groups")


def multiply(a: GroupElement, b: GroupElement) -> GroupElement:
    _check_same(a, b)
    if a.spec.variant == RACG:
        w = [g for g, _ in a.word]
        for g, _ in b.word:
            _racg_append(a.spec, w, g)
        return GroupElement(a.spec, _racg_shortlex(a.spec, w))
    if a.spec.variant == LATTICE:
        return reduce(a.spec, a.word + b.word)
    # both words are already reduced: only the seam can cancel
    left, right = list(a.word), list(b.word)
    tables = a.spec.tables
    while left and right and left[-1][0] == right[0][0]:
        g = left[-1][0]
        if a.spec.variant == FREE:
            e = left[-1][1] + right[0][1]
        else:
            e = int(tables[g][left[-1][1], right[0][1]])
        left.pop()
        right.pop(0)
        if e:
            left.append((g, e))
            break
    return GroupElement(a.spec, tuple(left) + tuple(right))


def inverse(a: GroupElement) -> GroupElement:
    spec = a.spec
    if spec.variant == LATTICE:
        return GroupElement(spec, tuple((g, -e) for g, e in a.word))
    if spec.variant == FREE:
        return GroupElement(spec, tuple((g, -e) for g, e in reversed(a.word)))
    if spec.variant == FREE_PRODUCT:
        return GroupElement(spec, tuple((g, int(_inverses(spec.tables[g])[e]))
                                        for g, e in reversed(a.word)))
    return reduce(spec, [g for g, _ in reversed(a.word)])


@dataclass(frozen=True)
class GeneratingSet:
    generators: tuple
    symmetric: bool

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        if self.symmetric and set(map(inverse, gens)) != set(gens):
            raise GroupError("generating set flagged symmetric is not closed under inversion")

    @property
    def spec(self) -> GroupSpec:
        return self.generators[0].spec


def standard_generators(spec: GroupSpec) -> GeneratingSet:
    """The canonical symmetric generating set of each variant."""
    v = spec.variant
    if v in (FREE, LATTICE):
        gens = [generator(spec, i, s) for i in range(spec.rank) for s in (1, -1)]
    elif v == RACG:
        gens = [generator(spec, i) for i in range(spec.rank)]
    else:
        gens = [generator(spec, i, e) for i in range(spec.rank) for e in spec.gensets[i]]
    return GeneratingSet(tuple(gens), True)


def _factor_lengths(spec: GroupSpec, i: int) -> np.ndarray:
    t = spec.tables[i]
    dist = np.full(t.shape[0], -1)
    dist[0] = 0
    q = deque([0])
    while q:
        x = q.popleft()
        for s in spec.gensets[i]:
            y = int(t[s, x])
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


def factor_word_lengths(spec: GroupSpec) -> list[np.ndarray]:
    return [_factor_lengths(spec, i) for i in range(spec.rank)]


def _is_standard(S: GeneratingSet | None, spec: GroupSpec) -> bool:
    return S is None or set(S.generators) == set(standard_generators(spec).generators)


def word_length(a: GroupElement, S: GeneratingSet | None = None) -> int:
    """Length of ``a`` in the word metric of ``S`` (standard set if None)."""
    spec = a.spec
    if _is_standard(S, spec):
        if spec.variant in (FREE, LATTICE):
            return int(sum(abs(e) for _, e in a.word))
        if spec.variant == RACG:
            return len(a.word)
        lens = factor_word_lengths(spec)
        return int(sum(lens[g][e] for g, e in a.word))
    if a == spec.identity:
        return 0
    seen = {spec.identity}
    frontier = [spec.identity]
    r = 0
    while frontier:
        r += 1
        nxt = []
        for h in frontier:
            for s in S.generators:
                g = multiply(s, h)
                if g == a:
                    return r
                if g not in seen:
                    seen.add(g)
                    nxt.append(g)
        frontier = nxt
        if len(seen) > 2_000_000:
            break
    raise GroupError("element not reached by the generating set")


def ball(spec: GroupSpec, S: GeneratingSet | None, r: int) -> list[tuple[GroupElement, int]]:
    """All elements at distance ≤ r from e, with their lengths, in BFS order."""
    if r < 0:
        raise GroupError("radius must be nonnegative")
    gens = (S or standard_generators(spec)).generators
    out = [(spec.identity, 0)]
    seen = {spec.identity}
    frontier = [spec.identity]
    for k in range(1, r + 1):
        nxt = []
        for h in frontier:
            for s in gens:
                g = multiply(s, h)
                if g not in seen:
                    seen.add(g)
                    nxt.append(g)
                    out.append((g, k))
        frontier = nxt
    return out


def free_ball_size(d: int, r: int) -> int:
    """|B(r)| in the free group of rank d (closed form, d ≥ 1)."""
    if d == 1:
        return 2 * r + 1
    return 1 + 2 * d * ((2 * d - 1) ** r - 1) // (2 * d - 2)


# -- defining-diagram automorphisms ------------------------------------------

def _diagram_automorphism(adj: np.ndarray, fixed: dict[int, int]) -> list[int] | None:
    """Backtracking search for a graph automorphism extending ``fixed``."""
    n = adj.shape[0]
    deg = adj.sum(axis=1)
    phi = dict(fixed)
    for a, b in fixed.items():
        if deg[a] != deg[b]:
            return None
    for a, b in itertools.product(fixed, fixed):
        if adj[a, b] != adj[fixed[a], fixed[b]]:
            return None
    order = [v for v in range(n) if v not in phi]
    used = set(phi.values())

    def extend(k):
        if k == len(order):
            return True
        v = order[k]
        for w in range(n):
            if w in used or deg[w] != deg[v]:
                continue
            if all(adj[v, a] == adj[w, phi[a]] for a in phi):
                phi[v] = w
                used.add(w)
                if extend(k + 1):
                    return True
                del phi[v]
                used.discard(w)
        return False

    if not extend(0):
        return None
    return [phi[v] for v in range(n)]


@dataclass(frozen=True)
class SuperflexWitness:
    s: int
    t: int
    u: int
    case: str          # "i": fixes star of s, swaps t,u ; "ii": fixes star of t, swaps s,u
    automorphism: tuple


def is_superflexible(spec: GroupSpec) -> tuple[bool, list[SuperflexWitness]]:
    """Check super-flexibility of a RACG defining diagram.

    Returns the verdict and, when true, one witness per non-commuting pair
    ``s < t``.  A failing pair yields ``(False, witnesses_so_far)``."""
    if spec.variant != RACG:
        raise GroupError("is_superflexible needs a RACG")
    adj = np.asarray(spec.commuting, dtype=bool)
    n = spec.rank
    witnesses = []
    for s, t in itertools.combinations(range(n), 2):
        if adj[s, t]:
            continue
        found = None
        for u in range(n):
            if u in (s, t) or adj[u, s] or adj[u, t]:
                continue
            for case, (a, b) in (("i", (s, t)), ("ii", (t, s))):
                fixed = {a: a}
                fixed.update({v: v for v in np.flatnonzero(adj[a]).tolist()})
                if b in fixed or u in fixed:
                    continue
                fixed[b] = u
                fixed[u] = b
                phi = _diagram_automorphism(adj, fixed)
                if phi is not None:
                    found = SuperflexWitness(s, t, u, case, tuple(phi))
                    break
            if found:
                break
        if found is None:
            return False, witnesses
        witnesses.append(found)
    return True, witnesses
