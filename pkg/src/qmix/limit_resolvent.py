"""Green functions R^z(e, g) = (λ(p) − z)⁻¹(e, g) of limiting operators.

Conventions: λ(p)(x, y) = p_{xy⁻¹}, so R(x, y) = R(e, y x⁻¹) and the finite
analogue of R(e, g) is ⟨δ_x, (ρ_N(p) − z)⁻¹ δ_{g.x}⟩ at a good point x.
Blocks are r×r; scalar models have r = 1 and return plain complex numbers
from the public queries.

Models
------
RegularTree      d-regular tree, edge weight w (closed form)
Lattice          Z^d with per-axis weights (closed form for d = 1, FFT above)
FreeProduct      free products of finite groups (zeta system)
TreeLift         universal cover of a weighted base graph (matricial)
CartesianConvolution   finite Hermitian F coupled to an inner model
ProductModel     Cartesian product of two scalar models (direct products)
"""
from __future__ import annotations

import csv
import math
from typing import Iterator

import numpy as np
from scipy import optimize

from . import group_core as gc
from .group_algebra import AlgebraElement
from .group_core import GroupElement, GroupSpec


class SolverError(RuntimeError):
    """The self-consistency solve failed to converge or left the Herglotz branch."""


DAMPING = 0.5
MAX_ITER = 100_000
TOL = 1e-12
LEVEL_CAP = 400_000


def _check_z(z) -> complex:
    z = complex(z)
    if z.imag == 0:
        raise SolverError("z must be off the real axis")
    return z


class ResolventModel:
    r: int = 1
    spec: GroupSpec

    # subclasses implement _diag(z), _off(g, z) for Im z > 0 and _levels
    def _diag(self, z: complex) -> np.ndarray:
        raise NotImplementedError

    def _off(self, g: GroupElement, z: complex) -> np.ndarray:
        raise NotImplementedError

    def length(self, g: GroupElement) -> int:
        return gc.word_length(g)

    def support(self) -> tuple[float, float]:
        """An interval containing the spectrum."""
        raise NotImplementedError

    # -- public queries ---------------------------------------------------
    def diag_block(self, z) -> np.ndarray:
        z = _check_z(z)
        if z.imag < 0:
            return self.diag_block(z.conjugate()).conj().T
        R = self._diag(z)
        if np.trace(R).imag <= 0:
            raise SolverError(f"Herglotz property violated at z={z}")
        return R

    def offdiag_block(self, g: GroupElement, z) -> np.ndarray:
        z = _check_z(z)
        if g.spec != self.spec:
            raise gc.GroupError("element is not in the model's group")
        if z.imag < 0:
            return self.offdiag_block(gc.inverse(g), z.conjugate()).conj().T
        if not g.word:
            return self.diag_block(z)
        return self._off(g, z)

    def solve_diag(self, z):
        R = self.diag_block(z)
        return complex(R[0, 0]) if self.r == 1 else R

    def offdiag(self, g: GroupElement, z):
        R = self.offdiag_block(g, z)
        return complex(R[0, 0]) if self.r == 1 else R

    def im_offdiag(self, g: GroupElement, z) -> np.ndarray:
        """(Im R)(e, g) = (R(e,g) − R(e,g⁻¹)†)/2i."""
        a = self.offdiag_block(g, z)
        b = self.offdiag_block(gc.inverse(g), z)
        return (a - b.conj().T) / 2j

    def density(self, E: float, eta: float) -> float:
        """(1/πr)·Im Tr R^{E+iη}(e, e)."""
        return float(np.trace(self.diag_block(complex(E, eta))).imag / (math.pi * self.r))

    # -- shells -------------------------------------------------------------
    def _levels(self, z: complex, kmax: int) -> Iterator:
        """Yield, for k = 1, 2, ..., a triple (A, B, m): blocks R(e,g) and
        R(e,g⁻¹) for the elements of the sphere |g| = k (grouped into
        classes of multiplicity m).  Stops early when the sphere gets
        larger than LEVEL_CAP."""
        raise NotImplementedError

    def _ward_levels(self, z: complex, kmax: int) -> Iterator[float]:
        """Σ_{|g|=k} ‖R(e,g)‖_F² for k = 1, 2, ..."""
        for A, B, m in self._levels(z, kmax):
            yield float(np.sum(m * np.sum(np.abs(A) ** 2, axis=(1, 2))))


# -- helpers ------------------------------------------------------------------

def _geom_tail(last: float, rho: float, k: int, power: float = 0.0) -> float:
    """Σ_{j≥1} last·ρ^j·((k+j)/k)^power, summed numerically."""
    if last == 0:
        return 0.0
    if not rho < 1:
        return math.inf
    j = np.arange(1, 20000)
    terms = rho ** j * ((k + j) / k) ** power
    return float(last * terms.sum())


def _contraction(hist: list[float], window: int = 4) -> float:
    """Per-level decay factor measured over the last few shells."""
    h = [v for v in hist if v > 0]
    if len(h) < 2:
        return 0.0 if (hist and hist[-1] == 0) else math.inf
    m = min(window, len(h) - 1)
    return (h[-1] / h[-1 - m]) ** (1.0 / m)


# -- RegularTree ----------------------------------------------------------------

class RegularTree(ResolventModel):
    """d-regular tree with constant edge weight w.

    γ is the branch Green function, (d−1)w²γ² + zγ + 1 = 0 with Im γ > 0;
    R(e,e) = −1/(z + d w² γ) and R(e,g) = R(e,e)·(−wγ)^{|g|}."""

    def __init__(self, d: int, w: float = 1.0, spec: GroupSpec | None = None):
        if d < 2:
            raise ValueError("degree must be at least 2")
        self.d, self.w = int(d), float(w)
        self.spec = spec or (gc.free_group(d // 2) if d % 2 == 0 else gc.z2_free_product(d))

    def support(self):
        e = 2 * abs(self.w) * math.sqrt(self.d - 1)
        return -e, e

    def _gamma(self, z: complex) -> complex:
        a = (self.d - 1) * self.w ** 2
        disc = np.sqrt(complex(z * z - 4 * a))
        roots = [(-z + disc) / (2 * a), (-z - disc) / (2 * a)]
        return max(roots, key=lambda g: g.imag)

    def _diag(self, z):
        g = self._gamma(z)
        return np.array([[-1.0 / (z + self.d * self.w ** 2 * g)]])

    def zeta(self, z) -> complex:
        return -self.w * self._gamma(_check_z(z))

    def _off(self, g, z):
        return self._diag(z) * self.zeta(z) ** self.length(g)

    def sphere_size(self, k: int) -> int:
        return 1 if k == 0 else self.d * (self.d - 1) ** (k - 1)

    def _levels(self, z, kmax):
        R0, Z = self._diag(z)[0, 0], self.zeta(z)
        for k in range(1, kmax + 1):
            v = np.array([[[R0 * Z ** k]]])
            yield v, v, np.array([float(self.sphere_size(k))])

    def kesten_mckay(self, E) -> np.ndarray:
        """Closed-form density of the spectral measure at e."""
        E = np.asarray(E, float) / self.w
        d = self.d
        inside = 4 * (d - 1) - E ** 2
        out = np.where(inside > 0, d * np.sqrt(np.clip(inside, 0, None)) / (2 * math.pi * (d * d - E ** 2)), 0.0)
        return out / abs(self.w)

    def kesten_mckay_cdf(self, t) -> np.ndarray:
        from scipy.integrate import quad
        lo, hi = self.support()
        t = np.atleast_1d(np.asarray(t, float))
        out = np.empty_like(t)
        for i, s in enumerate(t):
            if s <= lo:
                out[i] = 0.0
            elif s >= hi:
                out[i] = 1.0
            else:
                out[i] = quad(lambda x: float(self.kesten_mckay(x)), lo, s, limit=200)[0]
        return out


# -- Lattice --------------------------------------------------------------------

def lattice_vector(g: GroupElement) -> np.ndarray:
    v = np.zeros(g.spec.rank, dtype=np.int64)
    for s, e in g.word:
        v[s] += e
    return v


class Lattice(ResolventModel):
    """Z^d with p = Σ_i w_i (e_i + e_i⁻¹).  Exact for d = 1; for d ≥ 2 the
    Green function is computed by FFT on a torus large enough that the
    wrap-around error is about exp(−η·M/(2Σw))."""

    MAX_POINTS = 2 ** 22

    def __init__(self, d: int, weights=None):
        self.d = int(d)
        self.weights = np.ones(d) if weights is None else np.asarray(weights, float)
        self.spec = gc.integer_lattice(d)
        self._cache: dict = {}

    def support(self):
        s = 2 * np.abs(self.weights).sum()
        return -s, s

    def _sqrt1(self, z):
        s = np.sqrt(complex(z * z - 4 * self.weights[0] ** 2))
        return s if s.imag > 0 else -s

    def _torus(self, z):
        key = z
        if key not in self._cache:
            span = 2 * np.abs(self.weights).sum()
            M = int(math.ceil(40 * span / z.imag))
            M = min(max(M, 16), int(self.MAX_POINTS ** (1 / self.d)))
            k = 2 * np.pi * np.arange(M) / M
            lam = np.zeros((M,) * self.d)
            for i in range(self.d):
                shape = [1] * self.d
                shape[i] = M
                lam = lam + (2 * self.weights[i] * np.cos(k)).reshape(shape)
            G = np.fft.ifftn(1.0 / (lam - z))
            self._cache = {key: (M, G)}
        return self._cache[key]

    def torus_size(self, z) -> int:
        return self._torus(_check_z(z))[0] if self.d > 1 else 0

    def _value(self, n: np.ndarray, z: complex) -> complex:
        if self.d == 1:
            s = self._sqrt1(z)
            t = (z - s) / (2 * self.weights[0])
            return -1.0 / s * t ** abs(int(n[0]))
        M, G = self._torus(z)
        return complex(G[tuple(np.asarray(n) % M)])

    def _diag(self, z):
        return np.array([[self._value(np.zeros(self.d, int), z)]])

    def _off(self, g, z):
        return np.array([[self._value(lattice_vector(g), z)]])

    def length(self, g):
        return int(np.abs(lattice_vector(g)).sum())

    def _levels(self, z, kmax):
        if self.d == 1:
            s = self._sqrt1(z)
            t = (z - s) / (2 * self.weights[0])
            for k in range(1, kmax + 1):
                v = np.array([[[-t ** k / s]]])
                yield v, v, np.array([2.0])
            return
        M, G = self._torus(z)
        idx = np.indices((M,) * self.d).reshape(self.d, -1)
        wrapped = np.where(idx > M // 2, idx - M, idx)
        l1 = np.abs(wrapped).sum(axis=0)
        vals = G.ravel()
        order = np.argsort(l1, kind="stable")
        l1s, vals = l1[order], vals[order]
        cuts = np.searchsorted(l1s, np.arange(kmax + 2))
        for k in range(1, min(kmax, M // 2) + 1):
            v = vals[cuts[k]:cuts[k + 1]]
            if v.size == 0:
                return
            yield v[:, None, None], v[:, None, None], np.ones(v.size)


# -- FreeProduct -------------------------------------------------------------------

class FreeProduct(ResolventModel):
    """Γ = Γ_1 * ... * Γ_k with p = p_e·e + Σ_i Σ_{v ∈ Γ_i\\e} p_v v.

    Unknowns ζ_i(h) = R(h, e)/R(e, e) for h ∈ Γ_i\\e.  Writing
    B_j = Σ_{v ∈ Γ_j\\e} p_{v⁻¹} ζ_j(v) and C_i = Σ_{j≠i} B_j, each factor
    solves the linear system ((z − C_i) − A_i) ζ_i = b_i with
    A_i[h, w] = p_{hw⁻¹}, b_i[h] = p_h, and
    R(e, e) = 1/(p_e − z + Σ_j B_j),  R(e, g) = R(e, e)·Π ζ(v_j⁻¹)
    over the syllables v_j of g."""

    def __init__(self, spec: GroupSpec, weights=None, p_e: float = 0.0):
        if spec.variant != gc.FREE_PRODUCT:
            raise ValueError("FreeProduct needs a free product of finite groups")
        self.spec = spec
        self.p_e = float(p_e)
        self.inv = [gc._inverses(t) for t in spec.tables]
        if weights is None:
            weights = []
            for t, gs in zip(spec.tables, spec.gensets):
                w = np.zeros(t.shape[0], complex)
                w[list(gs)] = 1.0
                weights.append(w)
        self.weights = [np.asarray(w, complex) for w in weights]
        for w, inv in zip(self.weights, self.inv):
            w[0] = 0.0
            if not np.allclose(w[inv], w.conj()):
                raise ValueError("weights must satisfy p_{v⁻¹} = conj(p_v)")
        self.lengths = gc.factor_word_lengths(spec)
        self._A, self._b = [], []
        for t, w in zip(spec.tables, self.weights):
            n = t.shape[0]
            inv = gc._inverses(t)
            hw = t[np.arange(n)[:, None], inv[None, :]]  # h·w⁻¹
            A = w[hw]
            A[hw == 0] = self.p_e
            self._A.append(A[1:, 1:])
            self._b.append(w[1:])
        self._cache: dict = {}
        self._last = None  # (z, zetas) for warm starts

    @classmethod
    def from_symbol(cls, p: AlgebraElement) -> "FreeProduct":
        spec = p.spec
        weights = [np.zeros(t.shape[0], complex) for t in spec.tables]
        p_e = 0.0
        for g, c in p.support.items():
            if not g.word:
                p_e = float(c[0, 0].real)
            elif len(g.word) == 1:
                i, v = g.word[0]
                weights[i][v] = c[0, 0]
            else:
                raise ValueError("symbol must be supported on the factors")
        return cls(spec, weights, p_e)

    def support(self):
        s = sum(np.abs(w).sum() for w in self.weights) + abs(self.p_e)
        return -s, s

    # -- the zeta system ------------------------------------------------
    def _B(self, zetas):
        return np.array([np.dot(w[inv][1:], zt) for w, inv, zt in zip(self.weights, self.inv, zetas)])

    def _map(self, zetas, z):
        B = self._B(zetas)
        tot = B.sum()
        out = []
        for i, (A, b) in enumerate(zip(self._A, self._b)):
            C = tot - B[i]
            M = (z - C) * np.eye(A.shape[0]) - A
            out.append(np.linalg.solve(M, b))
        return out

    def _residual(self, zetas, z) -> float:
        new = self._map(zetas, z)
        return max(float(np.abs(a - b).max()) for a, b in zip(new, zetas))

    def _pack(self, zetas):
        v = np.concatenate(zetas)
        return np.concatenate([v.real, v.imag])

    def _unpack(self, x):
        n = x.size // 2
        v = x[:n] + 1j * x[n:]
        out, k = [], 0
        for b in self._b:
            out.append(v[k:k + b.size])
            k += b.size
        return out

    def _iterate(self, zetas, z, max_iter=MAX_ITER):
        """Damped fixed-point iteration, finished by a Newton-type polish."""
        res = math.inf
        for it in range(max_iter):
            new = self._map(zetas, z)
            res = max(float(np.abs(a - b).max()) for a, b in zip(new, zetas))
            zetas = [(1 - DAMPING) * a + DAMPING * b for a, b in zip(zetas, new)]
            if res < TOL:
                return zetas, res, it
            if it >= 200 and res < 1e-3:
                break
        sol = optimize.root(lambda x: self._pack(self._map(self._unpack(x), z)) - x,
                            self._pack(zetas), method="hybr", options={"xtol": 1e-15})
        cand = self._unpack(sol.x)
        res2 = self._residual(cand, z)
        if res2 < res:
            zetas, res = cand, res2
        return zetas, res, max_iter

    def _path(self, z: complex) -> list[complex]:
        """Continuation path from 10i: across at height 10, then down."""
        start = 10j
        pts = [complex(x, 10.0) for x in np.linspace(0.0, z.real, 8)[1:]] if z.real else []
        hs = np.geomspace(10.0, z.imag, max(2, int(math.ceil(4 * math.log10(10.0 / z.imag))) + 2))
        pts += [complex(z.real, h) for h in hs[1:]]
        return [start] + pts

    def solve_zeta_system(self, z) -> list[np.ndarray]:
        """ζ_i(h) for h ∈ Γ_i\\e (index h−1), on the Herglotz branch."""
        z = _check_z(z)
        if z.imag < 0:
            raise SolverError("solve_zeta_system needs Im z > 0")
        if z in self._cache:
            return self._cache[z]
        if self._last is not None and abs(self._last[0] - z) < 0.25 * z.imag:
            path, zetas = [z], self._last[1]
        else:
            path = self._path(z)
            zetas = [b / path[0] for b in self._b]
        res = math.inf
        for w in path:
            zetas, res, _ = self._iterate(zetas, w)
        if not res < 1e-10:
            raise SolverError(f"zeta system did not converge at z={z}: residual {res:.2e}")
        R0 = self._R0(zetas, z)
        if R0.imag <= 0:
            raise SolverError(f"continuation left the Herglotz branch at z={z}")
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[z] = zetas
        self._last = (z, zetas)
        return zetas

    def _R0(self, zetas, z) -> complex:
        return 1.0 / (self.p_e - z + self._B(zetas).sum())

    def zeta(self, i: int, h: int, z) -> complex:
        if h == 0:
            return 1.0 + 0j
        return complex(self.solve_zeta_system(z)[i][h - 1])

    def _diag(self, z):
        return np.array([[self._R0(self.solve_zeta_system(z), z)]])

    def _off(self, g, z):
        zs = self.solve_zeta_system(z)
        val = self._R0(zs, z)
        for i, v in g.word:
            val *= zs[i][self.inv[i][v] - 1]
        return np.array([[val]])

    def _syllables(self, zs):
        """Per factor: (elements, lengths, ζ(v), ζ(v⁻¹))."""
        out = []
        for i, L in enumerate(self.lengths):
            v = np.arange(1, L.size)
            out.append((v, L[1:], zs[i][v - 1], zs[i][self.inv[i][v] - 1]))
        return out

    def _levels(self, z, kmax):
        zs = self.solve_zeta_system(z)
        R0 = self._R0(zs, z)
        syl = self._syllables(zs)
        nf = len(syl)
        # store[k] = (last factor, Π ζ(v⁻¹) for g, Π ζ(v) for g⁻¹)
        store = {0: (np.array([-1]), np.array([1.0 + 0j]), np.array([1.0 + 0j]))}
        for k in range(1, kmax + 1):
            fs, As, Bs = [], [], []
            for i in range(nf):
                v, L, zv, zvi = syl[i]
                for ell in np.unique(L):
                    if ell > k or (k - ell) not in store:
                        continue
                    f0, a0, b0 = store[k - ell]
                    keep = f0 != i
                    sel = L == ell
                    a = (a0[keep][:, None] * zvi[sel][None, :]).ravel()
                    b = (b0[keep][:, None] * zv[sel][None, :]).ravel()
                    fs.append(np.full(a.size, i))
                    As.append(a)
                    Bs.append(b)
            if not fs:
                return
            f, a, b = map(np.concatenate, (fs, As, Bs))
            if f.size > LEVEL_CAP:
                return
            store[k] = (f, a, b)
            store.pop(k - int(max(L.max() for L in self.lengths)) - 1, None)
            yield (R0 * a)[:, None, None], (R0 * b)[:, None, None], np.ones(a.size)

    def _ward_levels(self, z, kmax):
        """Aggregated: S_k[i] = Σ over words of length k whose last syllable
        is in Γ_i of Π|ζ|²."""
        zs = self.solve_zeta_system(z)
        R0 = self._R0(zs, z)
        syl = self._syllables(zs)
        nf = len(syl)
        Lmax = int(max(L.max() for L in self.lengths))
        hist = [np.zeros(nf) for _ in range(Lmax)]  # S_{k-Lmax}..S_{k-1}
        # the empty word contributes to every factor's predecessor sum
        start = np.ones(1)
        for k in range(1, kmax + 1):
            cur = np.zeros(nf)
            for i in range(nf):
                _, L, _, zvi = syl[i]
                w = np.abs(zvi) ** 2
                for ell in np.unique(L):
                    if ell > k:
                        continue
                    prev = hist[-ell]
                    pred = (start[0] if ell == k else 0.0) + prev.sum() - prev[i]
                    cur[i] += w[L == ell].sum() * pred
            hist = hist[1:] + [cur]
            yield float(abs(R0) ** 2 * cur.sum())


# -- TreeLift ----------------------------------------------------------------

class TreeLift(ResolventModel):
    """Universal cover of a base graph on r vertices with edges (u_i, v_i)
    and weights a_i; the limit of random N-lifts.

    Oriented edge j < d is g_j from u_j to v_j with weight a_j, and j + d is
    its reverse.  The branch Green functions solve
    γ_j = −1/(z + Σ_{k: s_k = t_j, k ≠ j*} |α_k|² γ_k), R(e,e) is diagonal
    with entries −1/(z + Σ_{k: s_k = u} |α_k|² γ_k), and
    R(e, g) = R(e,e)·Z_{j1}···Z_{jℓ}, Z_j = −α_j γ_j E_{s_j t_j}, where
    g⁻¹ = L_{j1}···L_{jℓ}.  The product vanishes when the letters do not
    chain along the base graph."""

    def __init__(self, base, weights=None):
        from .actions import BaseGraph
        if not isinstance(base, BaseGraph):
            base = BaseGraph(int(base[0]), tuple(map(tuple, base[1])))
        self.base = base
        self.r = base.r
        d = len(base.edges)
        self.d = d
        a = np.ones(d, complex) if weights is None else np.asarray(weights, complex)
        self.alpha = np.concatenate([a, a.conj()])
        u = np.array([e[0] for e in base.edges])
        v = np.array([e[1] for e in base.edges])
        self.src = np.concatenate([u, v])
        self.dst = np.concatenate([v, u])
        self.star = np.concatenate([np.arange(d, 2 * d), np.arange(d)])
        self.spec = gc.free_group(d)
        # successor lists: k may follow j iff s_k = t_j and k ≠ j*
        self.succ = [np.array([k for k in range(2 * d) if self.src[k] == self.dst[j] and k != self.star[j]], dtype=int)
                     for j in range(2 * d)]
        self._cache: dict = {}

    def support(self):
        s = 2 * float(np.abs(self.alpha[:self.d]).sum())
        deg = np.zeros(self.r)
        for j in range(2 * self.d):
            deg[self.src[j]] += abs(self.alpha[j])
        return -deg.max(), deg.max()

    def gammas(self, z) -> np.ndarray:
        z = _check_z(z)
        if z in self._cache:
            return self._cache[z]
        w = np.abs(self.alpha) ** 2
        g = -np.ones(2 * self.d, complex) / z
        res = math.inf
        for it in range(MAX_ITER):
            s = np.array([np.dot(w[self.succ[j]], g[self.succ[j]]) for j in range(2 * self.d)])
            new = -1.0 / (z + s)
            res = float(np.abs(new - g).max())
            g = (1 - DAMPING) * g + DAMPING * new
            if res < TOL:
                break
        if res >= 1e-10:
            raise SolverError(f"lift recursion did not converge at z={z}: residual {res:.2e}")
        if np.any(g.imag <= 0):
            raise SolverError(f"branch Green functions left the upper half plane at z={z}")
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[z] = g
        return g

    def _diag(self, z):
        g = self.gammas(z)
        w = np.abs(self.alpha) ** 2
        s = np.zeros(self.r, complex)
        np.add.at(s, self.src, w * g)
        return np.diag(-1.0 / (z + s))

    def Z(self, j: int, z) -> np.ndarray:
        M = np.zeros((self.r, self.r), complex)
        M[self.src[j], self.dst[j]] = -self.alpha[j] * self.gammas(z)[j]
        return M

    def _letters(self, g: GroupElement) -> list[int]:
        out = []
        for s, e in gc.inverse(g).word:
            out += [s if e > 0 else s + self.d] * abs(e)
        return out

    def _off(self, g, z):
        M = self._diag(z)
        for j in self._letters(g):
            M = M @ self.Z(j, z)
        return M

    def _levels(self, z, kmax):
        R0 = self._diag(z)
        gam = self.gammas(z)
        zval = -self.alpha * gam
        # for a walk j1..jk: A = R0 Z_{j1}..Z_{jk}; B = R0 Z_{jk*}..Z_{j1*}
        # both are rank one: A = R0[:, s_{j1}] zA e_{t_{jk}}ᵀ, B = R0[:, s_{jk*}] zB e_{t_{j1*}}ᵀ
        last = np.arange(2 * self.d)
        first = np.arange(2 * self.d)
        zA = zval.copy()
        zB = zval[self.star].copy()
        for k in range(1, kmax + 1):
            n = last.size
            A = np.zeros((n, self.r, self.r), complex)
            B = np.zeros((n, self.r, self.r), complex)
            rows = np.arange(n)
            A[rows, :, self.dst[last]] = R0[:, self.src[first]].T * zA[:, None]
            B[rows, :, self.dst[self.star[first]]] = R0[:, self.src[self.star[last]]].T * zB[:, None]
            yield A, B, np.ones(n)
            if k == kmax:
                return
            cnt = np.array([self.succ[j].size for j in last])
            if cnt.sum() > LEVEL_CAP:
                return
            nxt = np.concatenate([self.succ[j] for j in last]) if cnt.sum() else np.array([], int)
            rep = np.repeat(np.arange(n), cnt)
            first, zA, zB = first[rep], zA[rep] * zval[nxt], zB[rep] * zval[self.star[nxt]]
            last = nxt

    def _ward_levels(self, z, kmax):
        R0 = self._diag(z)
        gam = self.gammas(z)
        zabs2 = np.abs(self.alpha * gam) ** 2
        # Y_j = Σ over walks starting with j of |Π z|², attached to the end vertex
        # Σ_g ‖R(e,g)‖_F² at level k = Σ_j |R0[s_j, s_j]|²·W_k(j),
        # W_1(j) = |z_j|², W_k(j) = |z_j|² Σ_{m ∈ succ(j)} W_{k-1}(m)
        W = zabs2.copy()
        r0 = np.abs(np.diag(R0)) ** 2
        for k in range(1, kmax + 1):
            yield float(np.dot(r0[self.src], W))
            W = zabs2 * np.array([W[self.succ[j]].sum() for j in range(2 * self.d)])


# -- CartesianConvolution ------------------------------------------------------

class CartesianConvolution(ResolventModel):
    """Finite Hermitian F (size m) coupled to a scalar inner model:
    'cartesian' gives F ⊗ 1 + 1 ⊗ λ(p), 'tensor' gives F ⊗ λ(p).

    With F = Σ_k μ_k φ_k φ_k†, R = Σ_k φ_k φ_k† ⊗ R_in^{z−μ_k} (cartesian)
    or Σ_k φ_k φ_k† ⊗ (1/μ_k) R_in^{z/μ_k} (tensor)."""

    def __init__(self, F, inner: ResolventModel, coupling: str = "cartesian"):
        if coupling not in ("cartesian", "tensor"):
            raise ValueError(f"unknown coupling {coupling!r}")
        F = np.asarray(F, complex)
        if not np.allclose(F, F.conj().T):
            raise ValueError("F must be Hermitian")
        if inner.r != 1:
            raise ValueError("inner model must be scalar")
        self.F, self.inner, self.coupling = F, inner, coupling
        self.mu, U = np.linalg.eigh(F)
        self.P = np.einsum("ik,jk->kij", U, U.conj())
        self.r = F.shape[0]
        self.spec = inner.spec

    def length(self, g):
        return self.inner.length(g)

    def support(self):
        lo, hi = self.inner.support()
        if self.coupling == "cartesian":
            return lo + self.mu.min(), hi + self.mu.max()
        m = np.abs(self.mu).max()
        s = m * max(abs(lo), abs(hi))
        return -s, s

    def _parts(self, z):
        """(coefficient, inner z) per eigenvalue, or None when μ = 0 (tensor)."""
        out = []
        for m in self.mu:
            if self.coupling == "cartesian":
                out.append((1.0, z - m))
            elif abs(m) < 1e-14:
                out.append(None)
            else:
                out.append((1.0 / m, z / m))
        return out

    def _combine(self, vals_fn, z, g_is_e: bool):
        R = np.zeros((self.r, self.r), complex)
        for P, part in zip(self.P, self._parts(z)):
            if part is None:
                if g_is_e:
                    R += P * (-1.0 / z)
                continue
            c, w = part
            R += c * vals_fn(w) * P
        return R

    def _diag(self, z):
        return self._combine(lambda w: self.inner.offdiag(self.spec.identity, w), z, True)

    def _off(self, g, z):
        return self._combine(lambda w: self.inner.offdiag(g, w), z, False)

    def _levels(self, z, kmax):
        parts = self._parts(z)
        gens = []
        for part in parts:
            if part is None:
                gens.append(None)
                continue
            c, w = part
            if w.imag > 0:
                gens.append((c, self.inner._levels(w, kmax), False))
            else:
                gens.append((c, self.inner._levels(w.conjugate(), kmax), True))
        for _ in range(kmax):
            A = B = m = None
            for P, gen in zip(self.P, gens):
                if gen is None:
                    continue
                c, it, flip = gen
                try:
                    a, b, mm = next(it)
                except StopIteration:
                    return
                a, b = a[:, 0, 0], b[:, 0, 0]
                if flip:  # R^{w}(e,g) = conj R^{w̄}(e,g⁻¹)
                    a, b = b.conj(), a.conj()
                termA = c * a[:, None, None] * P[None]
                termB = c * b[:, None, None] * P[None]
                A = termA if A is None else A + termA
                B = termB if B is None else B + termB
                m = mm
            if A is None:
                return
            yield A, B, m


# -- ProductModel --------------------------------------------------------------

class ProductModel(ResolventModel):
    """λ(p₁) ⊗ 1 + 1 ⊗ λ(p₂) on Γ₁ × Γ₂ for scalar models, by integrating
    R₁^{z−λ} against the spectral measure of the second factor.  The
    second model must have absolutely continuous spectrum on its support."""

    def __init__(self, m1: ResolventModel, m2: ResolventModel, nodes: int = 4000, spec=None):
        self.m1, self.m2 = m1, m2
        self.spec = spec
        lo, hi = m2.support()
        x, w = np.polynomial.legendre.leggauss(nodes)
        theta = (x + 1) * math.pi / 2
        c, h = (hi + lo) / 2, (hi - lo) / 2
        self.lam = c + h * np.cos(theta)
        dens = np.array([m2.density(l, 1e-13) for l in self.lam])
        self.wts = w * (math.pi / 2) * h * np.sin(theta) * dens

    def support(self):
        a, b = self.m1.support()
        c, d = self.m2.support()
        return a + c, b + d

    def _diag(self, z):
        vals = np.array([self.m1.solve_diag(z - l) for l in self.lam])
        return np.array([[np.dot(self.wts, vals)]])

    def _off(self, g, z):
        raise NotImplementedError("ProductModel only provides diagonal queries")


# -- diagnostics -----------------------------------------------------------------

def check_ac(model: ResolventModel, Es, etas) -> dict:
    """min/max of Im Tr R^{E+iη}(e,e)/r over the grid; non-positive values
    are reported as violations."""
    vals = np.empty((len(Es), len(etas)))
    for i, E in enumerate(Es):
        for j, eta in enumerate(etas):
            vals[i, j] = np.trace(model.diag_block(complex(E, eta))).imag / model.r
    bad = [(float(Es[i]), float(etas[j])) for i, j in zip(*np.nonzero(vals <= 0))]
    return {"min": float(vals.min()), "max": float(vals.max()), "values": vals, "violations": bad}


def fourth_moment(model: ResolventModel, z, C1_prime: float = 3.0, R_tr: int | None = None,
                  rel_tail: float = 1e-3, max_radius: int = 5000) -> dict:
    """η²·Σ_{|g|≤R} ‖Im R^z(e,g)‖_F⁴·|g|^{C1'} plus a geometric tail estimate.

    The tail uses the envelope ‖Im R(e,g)‖ ≤ (‖R(e,g)‖ + ‖R(e,g⁻¹)‖)/2 and
    its measured per-level contraction.  With ``R_tr=None`` the radius grows
    until the tail is below ``rel_tail`` of the partial sum."""
    z = _check_z(z)
    eta = abs(z.imag)
    kmax = R_tr if R_tr is not None else max_radius
    total, env, k, tail, rho = 0.0, [], 0, math.inf, math.inf
    complete = True
    for A, B, m in model._levels(z, kmax):
        k += 1
        im = (A - B.conj().transpose(0, 2, 1)) / 2j
        f = np.sum(np.abs(im) ** 2, axis=(1, 2)) ** 2
        total += eta ** 2 * float(np.dot(m, f)) * k ** C1_prime
        nA = np.sqrt(np.sum(np.abs(A) ** 2, axis=(1, 2)))
        nB = np.sqrt(np.sum(np.abs(B) ** 2, axis=(1, 2)))
        env.append(eta ** 2 * float(np.dot(m, ((nA + nB) / 2) ** 4)))
        if k >= 3:
            rho = _contraction(env)
            tail = _geom_tail(env[-1] * k ** C1_prime, rho, k, C1_prime)
            if R_tr is None and tail <= rel_tail * max(total, 1e-300):
                break
    else:
        complete = R_tr is not None and k == R_tr
    if k >= 3:
        rho = _contraction(env)
        tail = _geom_tail(env[-1] * k ** C1_prime, rho, k, C1_prime)
    return {"sum": total, "tail": tail, "value": total + tail, "radius": k,
            "contraction": rho, "tail_ok": bool(rho < 1), "complete": complete}


def ward_check(model: ResolventModel, z, radius: int | None = None,
               tol: float = 1e-10, max_radius: int = 100_000) -> dict:
    """Compare η·Σ_{|g|≤R} ‖R^z(e,g)‖_F² with Im Tr R^z(e,e).

    With ``radius=None`` the radius grows until the residual drops below
    ``tol`` or the shells stop shrinking."""
    z = _check_z(z)
    eta = abs(z.imag)
    R0 = model.diag_block(z)
    target = float(np.trace(R0).imag) * np.sign(z.imag)
    partial = eta * float(np.sum(np.abs(R0) ** 2))
    hist, k = [], 0
    kmax = radius if radius is not None else max_radius
    for s in model._ward_levels(z, kmax):
        k += 1
        partial += eta * s
        hist.append(eta * s)
        if radius is None and abs(target - partial) < tol:
            break
    rho = _contraction(hist)
    tail = _geom_tail(hist[-1], rho, max(k, 1)) if hist else 0.0
    return {"residual": abs(target - partial), "sum": partial, "im_trace": target,
            "radius": k, "tail": tail, "contraction": rho}


def spectral_density(model: ResolventModel, E: float, etas=None) -> dict:
    """Richardson (Neville) extrapolation of (1/πr)·Im Tr R^{E+iη}(e,e) to
    η = 0 along a decreasing ladder; the error bar is the change between
    the last two extrapolation orders."""
    etas = np.asarray(etas if etas is not None else 0.04 * 2.0 ** -np.arange(5), float)
    if np.any(np.diff(etas) >= 0) or np.any(etas <= 0):
        return {"density": math.nan, "error": math.inf, "flag": "non-monotone ladder"}
    vals = np.array([model.density(E, h) for h in etas])
    n = etas.size
    T = vals.copy()
    prev = T[-1]
    best = T[-1]
    for m in range(1, n):
        T = (T[1:] * etas[:n - m] - T[:-1] * etas[m:]) / (etas[:n - m] - etas[m:])
        prev, best = best, T[-1]
    dens = max(float(best), 0.0)
    return {"density": dens, "error": float(abs(best - prev)), "raw": vals, "etas": etas, "flag": ""}


def scan_csv(model: ResolventModel, Es, etas, path, C1_prime: float = 3.0) -> None:
    """Density and moment scan: E, eta, ReR, ImR, fourth_moment, ward_residual."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["E", "eta", "ReR", "ImR", "fourth_moment", "ward_residual"])
        for E in Es:
            for eta in etas:
                z = complex(E, eta)
                t = np.trace(model.diag_block(z)) / model.r
                fm = fourth_moment(model, z, C1_prime)["value"]
                wr = ward_check(model, z)["residual"]
                w.writerow([f"{E:.10g}", f"{eta:.10g}", f"{t.real:.12g}", f"{t.imag:.12g}",
                            f"{fm:.12g}", f"{wr:.6g}"])


def finite_resolvent_average(action, p: AlgebraElement, g: GroupElement, z, points=None) -> np.ndarray:
    """Average over points x of the r×r block ⟨(i,x), (ρ_N(p) − z)⁻¹ (j, g.x)⟩,
    the finite counterpart of R^z(e, g)."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla
    from .actions import representation_matrix
    op = representation_matrix(action, p).matrix.astype(complex)
    N, r = action.N, p.r
    pts = np.arange(N) if points is None else np.asarray(points)
    gx = action.perm(g)[pts]
    lu = spla.splu((op - complex(z) * sp.identity(N * r, dtype=complex, format="csr")).tocsc())
    out = np.zeros((r, r), complex)
    for j in range(r):
        rhs = np.zeros((N * r, len(pts)), complex)
        rhs[j * N + gx, np.arange(len(pts))] = 1.0
        cols = lu.solve(rhs)
        for i in range(r):
            out[i, j] = cols[i * N + pts, np.arange(len(pts))].mean()
    return out
