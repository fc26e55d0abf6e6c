"""Polynomial windows, Fejér counting bounds and trace comparison.

Three tools:

* ``resolvent_poly``: a square s = p² of a Chebyshev approximant p of
  λ ↦ sqrt(η Im g^z(λ)), so s ≥ 0 and s ≈ η²/((λ−E)² + η²) on [−a, a];
* ``fejer_polynomial`` and ``cms_count_bounds``: Chebyshev–Markov–Stieltjes
  brackets on eigenvalue counts from moment agreement outside a Bad set;
* ``trace_compare`` and ``main_bound_audit``: Tr(K₁ f₁(P_N) K₂* f₂(P_N))
  against its group-algebra surrogate Σ⟨k₂, ρ_N(q) k₁⟩.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import numpy.polynomial.chebyshev as cheb
import scipy.fft
from scipy.special import ellipk

from . import group_core as gc
from .actions import PermutationAction, representation_matrix
from .group_algebra import AlgebraElement, convolve, norms, rd_norm_bound
from .spectra import EigenSystem, count, eigendecompose

C_CAL = 35.0          # calibrated constant of the window precondition
GRID = 10_000         # points of the sup-error grid
BALL_CAP = 200_000    # largest ball enumerated for Bad sets
SUPPORT_CAP = 60_000  # largest symbol support built in the group algebra


class PreconditionError(ValueError):
    pass


class BudgetError(RuntimeError):
    pass


def default_eps(eta: float) -> float:
    """ε = 1/ln(max(1/η, 4))."""
    return 1.0 / math.log(max(1.0 / eta, 4.0))


def _as_coeffs(f) -> np.ndarray:
    if isinstance(f, np.polynomial.Polynomial):
        return np.asarray(f.coef)
    return np.atleast_1d(np.asarray(f))


# -- the window polynomial ---------------------------------------------------------

@dataclass
class WindowPolynomial:
    """s(λ) = p(λ)², coefficients in the Chebyshev basis of λ/a."""
    z: complex
    a: float
    n: int
    eps: float
    root: np.ndarray
    coef: np.ndarray
    error: float
    precondition: bool

    @property
    def degree(self) -> int:
        return self.coef.size - 1

    @property
    def bound(self) -> float:
        return math.exp(-1.0 / self.eps)

    @property
    def ok(self) -> bool:
        return self.error <= self.bound

    def __call__(self, lam):
        return cheb.chebval(np.asarray(lam) / self.a, self.coef)

    def target(self, lam):
        """η Im g^z(λ) = η²/((λ−E)² + η²)."""
        E, eta = self.z.real, self.z.imag
        return eta ** 2 / ((np.asarray(lam) - E) ** 2 + eta ** 2)


def chebyshev_interpolant(f, n: int, a: float = 1.0, nodes: int | None = None) -> np.ndarray:
    """Degree-n truncation of the Chebyshev interpolant of f on [−a, a]
    sampled at ``nodes`` (default 4n) first-kind points."""
    M = nodes or 4 * n
    if M < n + 1:
        raise ValueError("need at least n+1 nodes")
    x = np.cos(np.pi * (np.arange(M) + 0.5) / M)
    c = scipy.fft.dct(f(a * x), type=2) / M
    c[0] /= 2
    return c[: n + 1]


def resolvent_poly(z, a: float, n: int, eps: float | None = None, c: float = C_CAL,
                   strict: bool = True) -> WindowPolynomial:
    """Non-negative polynomial of degree 2n approximating η Im g^z on
    [−a, a], with its sup-error measured on a 10⁴-point grid.

    Requires n·ε ≥ c·max(a/η, 1); ``strict=False`` skips the check and
    records the outcome instead."""
    z = complex(z)
    E, eta = z.real, z.imag
    if eta <= 0 or a <= 0 or n < 1:
        raise PreconditionError("need η > 0, a > 0 and n ≥ 1")
    eps = default_eps(eta) if eps is None else float(eps)
    if not 0 < eps <= 1:
        raise PreconditionError("ε must lie in (0, 1]")
    pre = n * eps >= c * max(a / eta, 1.0)
    if strict and not pre:
        raise PreconditionError(f"n·ε = {n * eps:.4g} < c·max(a/η, 1) = {c * max(a / eta, 1.0):.4g}")
    root = chebyshev_interpolant(lambda lam: eta / np.sqrt((lam - E) ** 2 + eta ** 2), n, a)
    coef = cheb.chebmul(root, root)
    w = WindowPolynomial(z, float(a), int(n), eps, root, coef, 0.0, bool(pre))
    grid = np.linspace(-a, a, GRID)
    if -a < E < a:
        grid = np.append(grid, E)
    w.error = float(np.abs(w(grid) - w.target(grid)).max())
    return w


def min_degree(eta: float, a: float, eps: float | None = None, c: float = C_CAL) -> int:
    """Smallest n meeting the window precondition."""
    eps = default_eps(eta) if eps is None else eps
    return max(1, math.ceil(c * max(a / eta, 1.0) / eps - 1e-12))


# -- Fejér-type kernel ---------------------------------------------------------------

@dataclass
class FejerPolynomial:
    """F_n(x) = 1 + 2 Σ_{k<n} (1 − k/n)(−1)^k T_{2k}(x), degree 2(n−1).

    For x = cos θ, 2n·F_n(x) = D_n(θ − π/2)² + D_n(θ + π/2)² with
    D_n(φ) = sin(nφ)/sin φ, hence F_n(0) = n, F_n ≥ 0 and
    F_n(x) ≤ 1/(n x²) on [−1, 1]."""
    n: int
    coef: np.ndarray

    def __call__(self, x):
        return cheb.chebval(np.asarray(x), self.coef)

    def closed_form(self, x):
        th = np.arccos(np.clip(np.asarray(x, float), -1, 1))
        n = self.n
        out = 0.0
        for phi in (th - np.pi / 2, th + np.pi / 2):
            s = np.sin(phi)
            safe = np.where(np.abs(s) < 1e-12, 1.0, s)
            out = out + np.where(np.abs(s) < 1e-12, float(n * n), (np.sin(n * phi) / safe) ** 2)
        return out / (2 * n)

    @property
    def integral(self) -> float:
        return fejer_integral(self.n)


def fejer_polynomial(n: int) -> FejerPolynomial:
    if n < 1:
        raise ValueError("n must be positive")
    coef = np.zeros(2 * n - 1)
    k = np.arange(n)
    coef[2 * k] = 2.0 * (1 - k / n) * (-1.0) ** k
    coef[0] = 1.0
    return FejerPolynomial(n, coef)


def fejer_integral(n: int) -> float:
    """∫_{−1}^{1} F_n, from ∫ T_{2k} = −2/(4k² − 1).  Increases to π."""
    k = np.arange(1, n)
    return float(2 + 4 * np.sum((1 - k / n) * (-1.0) ** (k + 1) / (4 * k ** 2 - 1)))


# -- Bad sets ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BadCount:
    size: int
    radius: int
    exact: bool
    method: str


def _letters(action: PermutationAction):
    """(perm, weight, factor key) for every reduced letter of a free or
    free-product group; consecutive letters with clashing keys cancel."""
    spec = action.spec
    out = []
    if spec.variant == gc.FREE:
        for i in range(spec.rank):
            for s in (1, -1):
                out.append((action.syllable_perm(i, s), 1, (i, s)))
    else:
        lens = gc.factor_word_lengths(spec)
        for i in range(spec.rank):
            for h in range(1, spec.tables[i].shape[0]):
                out.append((action.perm(gc.generator(spec, i, h)), int(lens[i][h]), i))
    return out


def _clash(spec, k1, k2) -> bool:
    if spec.variant == gc.FREE:
        return k1[0] == k2[0] and k1[1] == -k2[1]
    return k1 == k2


def _bad_reduced_walks(action: PermutationAction, L: int) -> np.ndarray:
    """Points fixed by some reduced word of length ≤ L, by propagating
    reachability of reduced walks; rows of points already known to be
    bad are dropped as they appear."""
    spec = action.spec
    N = action.N
    letters = _letters(action)
    inv = [np.argsort(p) for p, _, _ in letters]
    bad = np.zeros(N, bool)
    alive = np.arange(N)
    levels: dict[int, list] = {}
    wmax = max(w for _, w, _ in letters)
    for ell in range(1, L + 1):
        cur = []
        for c, (p, w, key) in enumerate(letters):
            if ell == w:
                M = np.zeros((alive.size, N), bool)
                M[np.arange(alive.size), p[alive]] = True
            elif ell > w and ell - w in levels:
                prev = levels[ell - w]
                acc = None
                for c2, (_, _, key2) in enumerate(letters):
                    if prev[c2] is None or _clash(spec, key2, key):
                        continue
                    acc = prev[c2].copy() if acc is None else (acc | prev[c2])
                M = None if acc is None else acc[:, inv[c]]
            else:
                M = None
            cur.append(M)
        levels[ell] = cur
        hit = np.zeros(alive.size, bool)
        for M in cur:
            if M is not None:
                hit |= M[np.arange(alive.size), alive]
        if hit.any():
            bad[alive[hit]] = True
            keep = ~hit
            alive = alive[keep]
            for lv in levels.values():
                for i, M in enumerate(lv):
                    if M is not None:
                        lv[i] = M[keep]
        if alive.size == 0:
            break
        levels.pop(ell - wmax, None)
    return bad


def bad_count(action: PermutationAction, radius: int, S=None, ball_cap: int = BALL_CAP) -> BadCount:
    """|Fix*_N(B_S(radius))| in the standard word metric.

    Exact by closed form on tori, by reduced-walk propagation on free
    groups and free products, by ball enumeration otherwise; when the
    ball exceeds ``ball_cap`` the trivial bound N is returned with
    ``exact=False``."""
    N = action.N
    spec = action.spec
    if radius <= 0:
        return BadCount(0, radius, True, "empty")
    if S is not None and not gc._is_standard(S, spec):
        raise ValueError("only the standard generating set is supported")
    if action.meta.get("kind") == "torus":
        M = int(action.meta["M"])
        return BadCount(N if radius >= M else 0, radius, True, "torus")
    if spec.variant in (gc.FREE, gc.FREE_PRODUCT):
        bad = _bad_reduced_walks(action, radius)
        return BadCount(int(bad.sum()), radius, True, "reduced-walks")
    from .actions import _ball_perms
    ident = np.arange(N)
    bad = np.zeros(N, bool)
    for m, (_, pg) in enumerate(_ball_perms(action, None, radius)):
        if m >= ball_cap:
            return BadCount(N, radius, False, "capped")
        bad |= pg == ident
    return BadCount(int(bad.sum()), radius, True, "ball")


def _symbol_radius(p: AlgebraElement) -> int:
    return max((gc.word_length(g) for g in p.support), default=0)


# -- counting bounds ---------------------------------------------------------------------

def spectral_mass(model, J, eta: float = 1e-4, nodes: int = 400) -> tuple[float, float]:
    """(μ_p(J), error estimate).  Closed forms for regular trees and
    lattices, otherwise Gauss–Legendre quadrature of the smoothed density
    Im R^{E+iη}(e,e)/π."""
    from .limit_resolvent import Lattice, RegularTree
    s, t = map(float, J)
    if isinstance(model, RegularTree):
        F = model.kesten_mckay_cdf
        return float((F(t) - F(s))[0]), 1e-12
    if isinstance(model, Lattice) and model.d <= 2 and np.allclose(model.weights, model.weights[0]):
        w = float(abs(model.weights[0]))
        F1 = lambda u: 0.5 + np.arcsin(np.clip(u / (2 * w), -1, 1)) / np.pi
        if model.d == 1:
            return float(F1(t) - F1(s)), 1e-12
        th, wt = np.polynomial.legendre.leggauss(2000)
        th = (th + 1) * np.pi / 2
        F2 = lambda u: float(np.sum(wt * F1(u - 2 * w * np.cos(th))) / 2)
        return F2(t) - F2(s), 1e-6
    x, w = np.polynomial.legendre.leggauss(nodes)
    E = (s + t) / 2 + (t - s) / 2 * x
    dens = np.array([model.density(e, eta) for e in E])
    mass = float((t - s) / 2 * np.dot(w, dens))
    b = float(dens.max())
    return mass, 4 * b * eta * (1 + math.log1p((t - s) / eta)) / math.pi


def density_bound(model, I, eta: float = 1e-3, points: int = 201, margin: float = 1.1) -> float:
    """margin × sup over a grid of I of the largest diagonal density
    Im R^{E+iη}(e,e)_ii/π (closed forms where available)."""
    from .limit_resolvent import Lattice, RegularTree
    Es = np.linspace(float(I[0]), float(I[1]), points)
    if isinstance(model, RegularTree):
        return margin * float(model.kesten_mckay(Es).max())
    if isinstance(model, Lattice) and model.d == 1:
        w = float(abs(model.weights[0]))
        return margin * float((1 / (np.pi * np.sqrt(np.maximum(4 * w * w - Es ** 2, 1e-300)))).max())
    if isinstance(model, Lattice) and model.d == 2 and np.allclose(model.weights, model.weights[0]):
        w = float(abs(model.weights[0]))
        m = 1 - np.minimum((Es / (4 * w)) ** 2, 1.0)
        return margin * float((ellipk(m) / (2 * np.pi ** 2 * w)).max())
    vals = [np.diag(model.diag_block(complex(E, eta))).imag.max() / np.pi for E in Es]
    return margin * float(max(vals))


@dataclass
class CountBounds:
    lower: float
    upper: float
    mass: float
    endpoint_error: float
    C_simple: float
    simple_lower: float
    simple_upper: float
    bad: int
    n: int
    vacuous: bool

    def contains(self, k: int) -> bool:
        return self.lower - 1e-9 <= k <= self.upper + 1e-9


def cms_count_bounds(model, N: int, J, n: int, eps_dist: float, a: float, bad: int,
                     C0: float, I=None, r: int = 1, mass=None) -> CountBounds:
    """Two-sided bound on |Λ_J| for ρ_N(p) of size N·r.

    ``a`` bounds the spectra (‖p‖₁), ``C0`` bounds the density of each
    diagonal spectral measure on I, ``bad`` = |Bad_S(n)|.  Each endpoint
    t of J costs (s/n)(I_n·C0 + s/(n ε²)) with s = a + |t| and I_n the
    integral of F_n.  The constant C = a(3C0 + a/(nε²)) is reported
    alongside as ``C_simple``."""
    s0, t0 = map(float, J)
    if s0 > t0:
        raise ValueError("empty interval")
    if n < 1 or eps_dist <= 0:
        raise ValueError("need n ≥ 1 and ε > 0")
    if I is not None and (s0 - eps_dist < I[0] - 1e-12 or t0 + eps_dist > I[1] + 1e-12):
        raise ValueError("J must sit at distance ε inside I")
    if mass is None:
        mu, mu_err = spectral_mass(model, J)
    else:
        mu, mu_err = (mass, 0.0) if np.isscalar(mass) else mass
    In = fejer_integral(n)

    def endpoint(t):
        s = a + abs(t)
        return s / n * (In * C0 + s / (n * eps_dist ** 2))

    D = endpoint(s0) + endpoint(t0) + mu_err
    C = a * (3 * C0 + a / (n * eps_dist ** 2))
    # an unbounded density (C0 = inf) leaves nothing but the trivial bracket
    lower = r * (N - bad) * (mu - D) if N > bad and math.isfinite(D) else 0.0
    upper = r * (N * (mu + D) + bad) if math.isfinite(D) else float(N * r)
    sl = r * (N - bad) * (mu - C / n) if N > bad and math.isfinite(C) else 0.0
    su = r * (N * (mu + C / n) + bad) if math.isfinite(C) else float(N * r)
    lo, hi = max(lower, 0.0), min(upper, float(N * r))
    return CountBounds(lo, hi, mu, D, C, max(sl, 0.0), min(su, float(N * r)), int(bad), int(n),
                       bool(lo <= 0 and hi >= N * r))


def cms_check(sys: EigenSystem, model, action: PermutationAction, p: AlgebraElement, J, n: int,
              eps_dist: float, C0: float, I=None, bad: BadCount | None = None, mass=None) -> dict:
    """Exact |Λ_J| against ``cms_count_bounds`` for an eigensystem of ρ_N(p)."""
    a = norms(p)[0]
    if bad is None:
        bad = bad_count(action, 2 * n * max(_symbol_radius(p), 1))
    b = cms_count_bounds(model, action.N, J, n, eps_dist, a, bad.size, C0, I, p.r, mass)
    k = count(sys, J)
    return {"J": [float(J[0]), float(J[1])], "n": n, "count": k, "lower": b.lower,
            "upper": b.upper, "mass": b.mass, "inside": b.contains(k),
            "simple_inside": bool(b.simple_lower - 1e-9 <= k <= b.simple_upper + 1e-9),
            "bad": bad.size, "bad_exact": bad.exact, "vacuous": b.vacuous}


# -- trace comparison --------------------------------------------------------------------------

def _ball(action: PermutationAction, R: int, cap: int = SUPPORT_CAP) -> dict:
    """{g: perm} over the ball of radius R in the standard generators."""
    spec = action.spec
    gens = gc.standard_generators(spec).generators
    gp = [action.perm(s) for s in gens]
    out = {spec.identity: np.arange(action.N)}
    frontier = [spec.identity]
    for _ in range(R):
        nxt = []
        for h in frontier:
            ph = out[h]
            for s, ps in zip(gens, gp):
                g = gc.multiply(s, h)
                if g not in out:
                    out[g] = ps[ph]
                    nxt.append(g)
                    if len(out) > cap:
                        raise BudgetError(f"ball of radius {R} exceeds {cap} elements")
        frontier = nxt
    return out


def apply_symbol(q: AlgebraElement, v: np.ndarray, perms: dict) -> np.ndarray:
    """ρ_N(q) v for scalar q, using (ρ_N(g) v)(g.y) = v(y)."""
    out = np.zeros(v.shape, complex)
    for g, c in q.support.items():
        pg = perms[g]
        out[pg] += c[0, 0] * v
    return out


def symbol_matrix(q: AlgebraElement, perms: dict, N: int) -> np.ndarray:
    Q = np.zeros((N, N), complex)
    ys = np.arange(N)
    for g, c in q.support.items():
        Q[perms[g], ys] += c[0, 0]
    return Q


def hadamard_symbol(f1: AlgebraElement, f2: AlgebraElement, t1, t2) -> AlgebraElement:
    """q_g = conj(f₁)_{t₂⁻¹ g t₁} · (f₂)_g."""
    t2i = gc.inverse(t2)
    sup = {}
    for g, c in f2.support.items():
        h = gc.multiply(gc.multiply(t2i, g), t1)
        d = f1.support.get(h)
        if d is not None:
            sup[g] = d.conj() * c
    return AlgebraElement(f2.spec, sup, 1)


def _kernels(obs, action) -> tuple[list, np.ndarray]:
    if obs.r != 1:
        raise ValueError("trace comparison is implemented for scalar observables")
    return list(obs.elements(action)), obs.kernels[:, :, 0, 0]


def _matrix_poly(coeffs, P: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(P, dtype=complex)
    eye = np.eye(P.shape[0])
    for c in coeffs[::-1]:
        acc = acc @ P + c * eye
    return acc


@dataclass
class TraceComparison:
    trace: complex
    algebraic: complex
    gap: float
    bound: float
    bad: BadCount

    @property
    def ok(self) -> bool:
        return self.gap <= self.bound + 1e-9 * max(1.0, abs(self.trace))


def trace_compare(action: PermutationAction, K1, K2, f1, f2, p: AlgebraElement) -> TraceComparison:
    """Tr(K₁ f₁(P_N) K₂* f₂(P_N)) against Σ_{t₁,t₂} ⟨k_{2,t₂}, ρ_N(q_{t₁t₂}) k_{1,t₁}⟩
    for monomial coefficient vectors f₁, f₂ and self-adjoint scalar p."""
    from .group_algebra import apply_polynomial
    if p.r != 1 or not p.is_self_adjoint(1e-12):
        raise ValueError("p must be a self-adjoint scalar symbol")
    c1, c2 = _as_coeffs(f1), _as_coeffs(f2)
    T1, k1 = _kernels(K1, action)
    T2, k2 = _kernels(K2, action)
    P = representation_matrix(action, p).dense()
    F1, F2 = _matrix_poly(c1, P), _matrix_poly(c2, P)
    M1, M2 = K1.matrix(action).toarray(), K2.matrix(action).toarray()
    trace = complex(np.trace(M1 @ F1 @ M2.conj().T @ F2))
    g1, g2 = apply_polynomial(c1, p), apply_polynomial(c2, p)
    rp = max(_symbol_radius(p), 1)
    r0 = max(gc.word_length(t) for t in T1 + T2)
    r1 = max(c1.size, c2.size) - 1
    perms = _ball(action, 2 * r0 + 2 * r1 * rp)
    alg = 0j
    for i, t1 in enumerate(T1):
        for j, t2 in enumerate(T2):
            q = hadamard_symbol(g1, g2, t1, t2)
            alg += np.vdot(k2[j], apply_symbol(q, k1[i], perms))
    bad = bad_count(action, 2 * (r0 + r1 * rp))
    sup1 = np.abs(k1).max(axis=1).sum()
    sup2 = np.abs(k2).max(axis=1).sum()
    n1, n2 = np.linalg.norm(F1, 2), np.linalg.norm(F2, 2)
    l1 = np.sqrt(sum(abs(c[0, 0]) ** 2 for c in g1.support.values()))
    l2 = np.sqrt(sum(abs(c[0, 0]) ** 2 for c in g2.support.values()))
    bound = float(sup1 * sup2 * bad.size * (n1 * n2 + l1 * l2))
    return TraceComparison(trace, complex(alg), float(abs(trace - alg)), bound, bad)


def traceq_resolvent_bound(sys: EigenSystem, K, E1: float, E2: float, eta: float) -> tuple[float, float]:
    """(L_{J₁J₂}, (4η²/|Λ_{J₁}|) Tr(K Im R^{z₁} K* Im R^{z₂})) with
    J_j = [E_j − η, E_j + η], from the eigendecomposition."""
    from .quantum_stats import moment_LIJ
    import scipy.sparse as sp
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
    lam, V = sys.eigenvalues, sys.eigenvectors
    J1, J2 = (E1 - eta, E1 + eta), (E2 - eta, E2 + eta)
    L = moment_LIJ(sys, Kd, J1, J2)
    n1 = count(sys, J1)
    if n1 == 0:
        return 0.0, 0.0
    w1 = eta / ((lam - E1) ** 2 + eta ** 2)
    w2 = eta / ((lam - E2) ** 2 + eta ** 2)
    C = V.conj().T @ Kd @ V  # C[β, α] = ⟨φ_β, K φ_α⟩
    tr = float(np.sum(w2[:, None] * w1[None, :] * np.abs(C) ** 2))
    return L, 4 * eta ** 2 * tr / n1


# -- the main bound, audited -------------------------------------------------------------------------

def chebyshev_symbol(coef: np.ndarray, p: AlgebraElement, a: float, cap: int = SUPPORT_CAP) -> AlgebraElement:
    """Σ_k c_k T_k(p/a) in the group algebra by the three-term recurrence."""
    x = p.scale(1.0 / a)
    T_prev = AlgebraElement.delta(p.spec, r=p.r)
    acc = T_prev.scale(coef[0])
    if coef.size == 1:
        return acc
    T_cur = x
    acc = acc + T_cur.scale(coef[1])
    for c in coef[2:]:
        T_next = convolve(x, T_cur).scale(2.0) - T_prev
        if len(T_next) > cap:
            raise BudgetError("symbol support exceeds the budget")
        acc = acc + T_next.scale(c)
        T_prev, T_cur = T_cur, T_next
    return acc


@dataclass
class AuditRecord:
    E1: float
    E2: float
    eta: float
    n: int
    degree: int
    precondition: bool
    poly_error: float
    lhs: float
    q_term: float
    bad_term: float
    bad: int
    bad_exact: bool
    C: float
    inequality_ok: bool
    rd_bound: float
    q_norm_perp: float
    lambda_estimate: float
    lambda_lower: float
    norm_ratio: float
    hn_count: int
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _sphere_estimate(q: AlgebraElement) -> tuple[float, float]:
    """(Σ_k (k+1)‖q|_{|g|=k}‖₂, ‖q‖₂): the Haagerup-type upper estimate
    and the trivial lower bound for ‖λ(q)‖."""
    by = {}
    for g, c in q.support.items():
        k = gc.word_length(g)
        by[k] = by.get(k, 0.0) + float(np.sum(np.abs(c) ** 2))
    up = sum((k + 1) * math.sqrt(v) for k, v in by.items())
    return up, math.sqrt(sum(by.values()))


def main_bound_audit(action: PermutationAction, p: AlgebraElement, obs, E1: float, E2: float,
                     eta: float, n: int = 4, sys: EigenSystem | None = None,
                     C1_prime: float = 3.0, cap: int = SUPPORT_CAP) -> AuditRecord:
    """Every term of the main trace inequality for f_j = 4 s_{z_j, n}.

    The observable is centred kernel-wise; n is the degree budget of the
    window polynomial (the window precondition is recorded, not enforced)."""
    if p.r != 1:
        raise ValueError("audit is implemented for scalar symbols")
    N = action.N
    a = norms(p)[0]
    T, k = _kernels(obs, action)
    k = k - k.mean(axis=1, keepdims=True)
    w = [resolvent_poly(complex(E, eta), a, n, strict=False) for E in (E1, E2)]
    if sys is None:
        sys = eigendecompose(representation_matrix(action, p))
    lam, V = sys.eigenvalues, sys.eigenvectors
    F = [(V * (4 * wi(lam))) @ V.conj().T for wi in w]
    rows, cols, vals = [], [], []
    for t, kt in zip(T, k):
        pt = action.perm(t)
        rows.append(pt), cols.append(np.arange(N)), vals.append(kt[pt])
    K = np.zeros((N, N), complex)
    for r_, c_, v_ in zip(rows, cols, vals):
        K[r_, c_] += v_
    lhs = float(np.trace(K @ F[0] @ K.conj().T @ F[1]).real / (N * eta))

    f = [chebyshev_symbol(4 * wi.coef, p, a, cap) for wi in w]
    r0 = max(gc.word_length(t) for t in T)
    rp = max(_symbol_radius(p), 1)
    perms = _ball(action, 2 * r0 + 2 * n * rp, cap)
    q_term, norm_perp, lam_up, lam_lo, rd, hn = 0.0, 0.0, 0.0, 0.0, 0.0, 0
    for i, t1 in enumerate(T):
        for j, t2 in enumerate(T):
            q = hadamard_symbol(f[0], f[1], t1, t2)
            q_term += float(np.vdot(k[j], apply_symbol(q, k[i], perms)).real)
            if i != j:
                continue
            Q = symbol_matrix(q, perms, N)
            Q = (Q + Q.conj().T) / 2
            Pi = np.eye(N) - 1.0 / N
            ev = np.linalg.eigvalsh(Pi @ Q @ Pi)
            up, lo = _sphere_estimate(q)
            rdq = rd_norm_bound(q, C1_prime)
            norm_perp = max(norm_perp, float(np.abs(ev).max()))
            lam_up, lam_lo, rd = max(lam_up, up), max(lam_lo, lo), max(rd, rdq)
            hn = max(hn, int(np.sum(np.abs(ev) > 2 * rdq)))
    q_term /= N * eta
    bad = bad_count(action, 2 * (r0 + 2 * n * rp))
    ksup = float(np.abs(k).max(axis=1).sum())
    l2 = [math.sqrt(sum(abs(c[0, 0]) ** 2 for c in fi.support.values())) for fi in f]
    C = ksup ** 2 * (np.linalg.norm(F[0], 2) * np.linalg.norm(F[1], 2) + l2[0] * l2[1])
    bad_term = bad.size / (N * eta)
    ok = lhs <= q_term + C * bad_term + 1e-9 * max(1.0, abs(lhs))
    return AuditRecord(float(E1), float(E2), float(eta), int(n), w[0].degree, w[0].precondition and w[1].precondition,
                       max(w[0].error, w[1].error), lhs, q_term, bad_term, bad.size, bad.exact,
                       float(C), bool(ok), rd / eta, norm_perp, lam_up, lam_lo,
                       norm_perp / lam_up if lam_up else math.nan, hn)


def write_audit_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
