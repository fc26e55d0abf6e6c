"""Finitely supported elements of the group algebra M_r(C)[Γ].

An :class:`AlgebraElement` maps group elements to r×r complex blocks.  The
convolution product realises λ(p)λ(q) = λ(pq); ``star`` is the involution
(p*)_g = (p_{g⁻¹})†.
"""
from __future__ import annotations

import json
from typing import Iterable, Mapping

import numpy as np

from .group_core import (GeneratingSet, GroupElement, GroupError, GroupSpec,
                         inverse, multiply, reduce, word_length)

PRUNE = 1e-14


class AlgebraError(ValueError):
    pass


class AlgebraElement:
    """p = Σ_g p_g g with r×r complex coefficients (r = 1 for scalars)."""

    __slots__ = ("spec", "r", "support")

    def __init__(self, spec: GroupSpec, support: Mapping, r: int | None = None, prune=True):
        blocks = {}
        for g, c in support.items():
            if not isinstance(g, GroupElement):
                g = reduce(spec, g)
            elif g.spec != spec:
                raise AlgebraError("support element from another group")
            c = np.atleast_2d(np.asarray(c, dtype=complex))
            if r is None:
                r = c.shape[0]
            if c.shape != (r, r):
                raise AlgebraError(f"block of shape {c.shape}, expected {(r, r)}")
            blocks[g] = blocks[g] + c if g in blocks else c.copy()
        self.spec = spec
        self.r = 1 if r is None else int(r)
        self.support = blocks
        if prune:
            self._prune(0.0)

    def _prune(self, rel: float):
        tol = rel * self.l1() if rel else 0.0
        self.support = {g: c for g, c in self.support.items()
                        if np.linalg.norm(c) > tol and np.any(c != 0)}
        return self

    # -- construction -----------------------------------------------------
    @classmethod
    def delta(cls, spec: GroupSpec, g: GroupElement | None = None, r: int = 1, coeff=1.0):
        g = spec.identity if g is None else g
        return cls(spec, {g: np.asarray(coeff) * np.eye(r)}, r)

    @classmethod
    def indicator(cls, S: GeneratingSet | Iterable[GroupElement], weight=1.0, r: int = 1):
        gens = list(S.generators if isinstance(S, GeneratingSet) else S)
        spec = gens[0].spec
        sup = {}
        for g in gens:
            sup[g] = sup.get(g, 0) + np.asarray(weight) * np.eye(r)
        return cls(spec, sup, r)

    @classmethod
    def zero(cls, spec: GroupSpec, r: int = 1):
        return cls(spec, {}, r)

    # -- basic arithmetic -------------------------------------------------
    def _check(self, other: "AlgebraElement"):
        if not isinstance(other, AlgebraElement):
            raise AlgebraError("expected an AlgebraElement")
        if other.spec != self.spec or other.r != self.r:
            raise AlgebraError("spec or block size mismatch")

    def __getitem__(self, g: GroupElement) -> np.ndarray:
        return self.support.get(g, np.zeros((self.r, self.r), complex))

    def __iter__(self):
        return iter(self.support.items())

    def __len__(self):
        return len(self.support)

    def __add__(self, other):
        self._check(other)
        sup = {g: c.copy() for g, c in self.support.items()}
        for g, c in other.support.items():
            sup[g] = sup[g] + c if g in sup else c
        return AlgebraElement(self.spec, sup, self.r)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c):
        return AlgebraElement(self.spec, {g: c * b for g, b in self.support.items()}, self.r)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return convolve(self, other)
        return self.scale(other)

    __rmul__ = scale

    def __matmul__(self, other):
        return convolve(self, other)

    def l1(self) -> float:
        return float(sum(np.linalg.norm(c, 2) for c in self.support.values()))

    def allclose(self, other, atol=1e-12) -> bool:
        self._check(other)
        keys = set(self.support) | set(other.support)
        return all(np.allclose(self[g], other[g], atol=atol, rtol=0) for g in keys)

    def is_self_adjoint(self, tol=1e-12) -> bool:
        return self.allclose(star(self), atol=tol)

    def __repr__(self):
        terms = ", ".join(f"{g!r}: {c[0, 0] if self.r == 1 else '<block>'}"
                          for g, c in list(self.support.items())[:6])
        more = " ..." if len(self) > 6 else ""
        return f"AlgebraElement(r={self.r}, {{{terms}{more}}})"

    # -- serialisation ----------------------------------------------------
    def to_json(self) -> dict:
        return {
            "group": self.spec.to_json(),
            "r": self.r,
            "terms": [[g.to_json(), c.real.tolist(), c.imag.tolist()]
                      for g, c in self.support.items()],
        }

    @classmethod
    def from_json(cls, d) -> "AlgebraElement":
        if isinstance(d, str):
            d = json.loads(d)
        spec = GroupSpec.from_json(d["group"])
        sup = {}
        for word, re, im in d["terms"]:
            g = reduce(spec, [tuple(s) for s in word])
            sup[g] = np.asarray(re) + 1j * np.asarray(im)
        return cls(spec, sup, d["r"])


def convolve(p: AlgebraElement, q: AlgebraElement, prune: float = PRUNE) -> AlgebraElement:
    """(pq)_g = Σ_h p_h q_{h⁻¹g}."""
    p._check(q)
    out: dict = {}
    for h, a in p.support.items():
        for k, b in q.support.items():
            g = multiply(h, k)
            c = a @ b
            if g in out:
                out[g] += c
            else:
                out[g] = c
    res = AlgebraElement(p.spec, out, p.r, prune=False)
    return res._prune(prune)


def star(p: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(p.spec, {inverse(g): c.conj().T for g, c in p.support.items()}, p.r)


def apply_polynomial(coeffs, p: AlgebraElement, prune: float = PRUNE) -> AlgebraElement:
    """f(p) for f = Σ_k coeffs[k] X^k, by Horner's scheme."""
    coeffs = np.asarray(coeffs)
    if not p.is_self_adjoint(1e-12) and np.iscomplexobj(coeffs) and np.any(coeffs.imag):
        raise AlgebraError("non-real polynomial of a non-self-adjoint symbol")
    one = AlgebraElement.delta(p.spec, r=p.r)
    if coeffs.size == 0:
        return AlgebraElement.zero(p.spec, p.r)
    acc = one.scale(coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = convolve(acc, p, prune) + one.scale(c)
        acc._prune(prune)
    return acc


def norms(p: AlgebraElement, S: GeneratingSet | None = None) -> tuple[float, float, int]:
    """(ℓ¹, ℓ², diam_S) with ℓ norms taken over the block 2-norms and the
    diameter of the support clamped below at one."""
    blk = [np.linalg.norm(c, 2) for c in p.support.values()]
    l1 = float(sum(blk))
    l2 = float(np.sqrt(sum(b * b for b in blk)))
    sup = list(p.support)
    diam = 0
    for i, g in enumerate(sup):
        gi = inverse(g)
        for h in sup[i + 1:]:
            diam = max(diam, word_length(multiply(gi, h), S))
    return l1, l2, max(1, diam)


def rd_norm_bound(p: AlgebraElement, C1_prime: float, C: float = 1.0,
                  S: GeneratingSet | None = None) -> float:
    """C·sqrt(Σ_g ‖p_g‖² (|g|+1)^{C1'}), the rapid-decay bound on ‖λ(p)‖."""
    if C1_prime <= 0:
        raise AlgebraError("C1_prime must be positive")
    tot = 0.0
    for g, c in p.support.items():
        tot += np.linalg.norm(c, 2) ** 2 * (word_length(g, S) + 1) ** C1_prime
    return float(C * np.sqrt(tot))


def laurent(spec: GroupSpec, coeffs: Mapping[int, complex], gen: int = 0) -> AlgebraElement:
    """Σ_n c_n g^n for a single generator; handy on Z."""
    try:
        return AlgebraElement(spec, {reduce(spec, [(gen, n)]): c for n, c in coeffs.items()})
    except GroupError as exc:
        raise AlgebraError(str(exc)) from exc
