"""Observables, quantum moments and the QE / QM statistics.

For an eigenbasis (φ_α) and a matrix K,

    L_IJ        = (1/|Λ_I|) Σ_{α∈Λ_I} Σ_{β∈Λ_J} |⟨φ_β, K φ_α⟩|²
    L_I^{τ,η}   = (1/|Λ_I|) Σ_{α∈Λ_I} Σ_{β∈Λ_I, |λ_β−λ_α−τ|≤η} |⟨φ_β, K φ_α⟩|²

with the convention that both vanish when Λ_I is empty.  The QE and QM
statistics apply these to the centred observable K − ⟨K⟩.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .actions import PermutationAction, make_rng, representation_matrix, torus_coords
from .group_algebra import AlgebraElement
from .group_core import GroupElement
from .spectra import EigenSystem, window


@dataclass
class Observable:
    """A T-local matrix K(x, y) = Σ_{t∈T} k_t(x) 1(x = t.y) with r×r blocks
    k_t(x); ``kernels`` has shape (|T|, N, r, r).  Diagonal observables
    leave T empty, meaning T = {e} in whatever group acts."""
    T: tuple
    kernels: np.ndarray
    name: str = "observable"
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.kernels.shape[1]

    @property
    def r(self) -> int:
        return self.kernels.shape[2]

    @property
    def is_diagonal(self) -> bool:
        return not self.T or (len(self.T) == 1 and not self.T[0].word)

    def elements(self, action: PermutationAction) -> tuple:
        return self.T or (action.spec.identity,)

    def norm_1inf(self) -> float:
        """max over entries of the block 2-norm, an upper bound on ‖K‖_{1,∞}."""
        return float(np.linalg.norm(self.kernels, ord=2, axis=(2, 3)).max())

    def diagonal_vector(self) -> np.ndarray:
        """The vector a ∈ C^r ⊗ C^N (index i*N + x) of a diagonal observable."""
        if not self.is_diagonal:
            raise ValueError("observable is not diagonal")
        k = self.kernels[0]
        return np.einsum("xii->ix", k).ravel()

    def matrix(self, action: PermutationAction) -> sp.csr_matrix:
        N, r = self.N, self.r
        if action.N != N:
            raise ValueError("observable and action have different N")
        rows, cols, vals = [], [], []
        ys = np.arange(N)
        for t, k in zip(self.elements(action), self.kernels):
            xs = action.perm(t)
            blk = k[xs]  # k_t(t.y) for each y
            for i in range(r):
                for j in range(r):
                    v = blk[:, i, j]
                    nz = v != 0
                    rows.append(i * N + xs[nz])
                    cols.append(j * N + ys[nz])
                    vals.append(v[nz])
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        return sp.coo_matrix((vals, (rows, cols)), shape=(N * r, N * r)).tocsr()


def diagonal_observable(a, r: int = 1, name: str = "diagonal") -> Observable:
    a = np.asarray(a)
    N = a.size // r
    k = np.zeros((1, N, r, r), dtype=np.result_type(a, float))
    for i in range(r):
        k[0, :, i, i] = a[i * N:(i + 1) * N]
    return Observable((), k, name)


def tlocal_from_matrix(A, action: PermutationAction, T, r: int = 1, name="tlocal") -> Observable:
    """Split a T-local matrix with the canonical multiplicity choice
    k_g(x) = A(x, g⁻¹.x)/m_g(x), m_g(x) = #{t ∈ T : t⁻¹.x = g⁻¹.x}."""
    A = sp.csr_matrix(A)
    N = action.N
    T = tuple(T)
    invp = [np.argsort(action.perm(t)) for t in T]  # t⁻¹.x
    mult = np.zeros((len(T), N))
    for a, pa in enumerate(invp):
        for pb in invp:
            mult[a] += pa == pb
    k = np.zeros((len(T), N, r, r), complex)
    xs = np.arange(N)
    for a, pa in enumerate(invp):
        for i in range(r):
            for j in range(r):
                k[a, :, i, j] = np.asarray(A[i * N + xs, j * N + pa]).ravel() / mult[a]
    if not np.any(k.imag):
        k = k.real
    return Observable(T, k, name)


def random_tlocal(action: PermutationAction, T, seed: int, r: int = 1, name="random_tlocal") -> Observable:
    """Independent uniform complex kernel entries of modulus ≤ 1/|T|."""
    rng = make_rng(seed)
    shape = (len(T), action.N, r, r)
    k = (rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape)) / (np.sqrt(2) * len(T) * r)
    return Observable(tuple(T), k, name)


def _matrix_of(K, action=None):
    if isinstance(K, Observable):
        if action is None:
            raise ValueError("an action is needed to realise an Observable")
        return K.matrix(action)
    return K


# -- averages ---------------------------------------------------------------------

def average_symbol(obs: Observable, action: PermutationAction) -> AlgebraElement:
    """k_N = Σ_{t∈T} k_{N,t} t with k_{N,t} = (1/N) Σ_x K_N(t.x, x)."""
    K = obs.matrix(action)
    N, r = obs.N, obs.r
    xs = np.arange(N)
    sup = {}
    for t in dict.fromkeys(obs.elements(action)):
        tx = action.perm(t)
        blk = np.zeros((r, r), complex)
        for i in range(r):
            for j in range(r):
                blk[i, j] = np.asarray(K[i * N + tx, j * N + xs]).sum() / N
        sup[t] = blk
    return AlgebraElement(action.spec, sup, r)


def centered_matrix(obs: Observable, action: PermutationAction) -> sp.csr_matrix:
    """K_N − ⟨K_N⟩ with ⟨K_N⟩ = ρ_N(k_N)."""
    K = obs.matrix(action)
    k = average_symbol(obs, action)
    if not len(k):
        return K
    return (K - representation_matrix(action, k).matrix).tocsr()


# -- quantum moments ---------------------------------------------------------------

def _coeffs(sys: EigenSystem, K, cols: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
    """⟨φ_β, K φ_α⟩ for α in ``cols`` and β in ``rows`` (all if None)."""
    V = sys.eigenvectors
    KV = K @ V[:, cols]
    W = V if rows is None else V[:, rows]
    return W.conj().T @ KV


def moment_LIJ(sys: EigenSystem, K, I, J, action=None) -> float:
    K = _matrix_of(K, action)
    a, b = window(sys, I).indices, window(sys, J).indices
    if a.size == 0 or b.size == 0:
        return 0.0
    C = _coeffs(sys, K, a, b)
    return float(np.sum(np.abs(C) ** 2) / a.size)


def trace_LIJ(sys: EigenSystem, K, I, J, action=None) -> float:
    """(1/|Λ_I|) Tr(K 1_I(P) K* 1_J(P)) from the spectral projectors."""
    K = _matrix_of(K, action)
    a, b = window(sys, I).indices, window(sys, J).indices
    if a.size == 0:
        return 0.0
    V = sys.eigenvectors
    PI = V[:, a] @ V[:, a].conj().T
    PJ = V[:, b] @ V[:, b].conj().T
    Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
    return float(np.trace(Kd @ PI @ Kd.conj().T @ PJ).real / a.size)


def moment_L_tau_eta(sys: EigenSystem, K, I, tau: float, eta: float, action=None,
                     tol: float = 1e-9) -> float:
    """L_I^{τ,η}; eigenvalue coincidences are decided up to ``tol``."""
    K = _matrix_of(K, action)
    a = window(sys, I).indices
    if a.size == 0:
        return 0.0
    C = _coeffs(sys, K, a, a)
    lam = sys.eigenvalues[a]
    mask = np.abs(lam[:, None] - lam[None, :] - tau) <= eta + tol  # rows β, cols α
    return float(np.sum(np.abs(C[mask]) ** 2) / a.size)


def qe_statistic(sys: EigenSystem, obs: Observable, action: PermutationAction, I) -> float:
    """L_I^{0,0} of the centred observable: the quantum-ergodicity average."""
    return moment_L_tau_eta(sys, centered_matrix(obs, action), I, 0.0, 0.0)


def qe_diagonal_form(sys: EigenSystem, a, I) -> float:
    """(1/|Λ_I|) Σ_{α∈Λ_I} |⟨φ_α, a φ_α⟩ − ⟨a⟩|², the plain diagonal version."""
    a = np.asarray(a)
    idx = window(sys, I).indices
    if idx.size == 0:
        return 0.0
    V = sys.eigenvectors[:, idx]
    vals = np.einsum("xa,x,xa->a", V.conj(), a, V)
    return float(np.mean(np.abs(vals - a.mean()) ** 2))


def qm_statistic(sys: EigenSystem, obs: Observable, action: PermutationAction,
                 E1: float, E2: float, eta: float) -> float:
    """L_{J1 J2} of the centred observable with J_i = [E_i − η, E_i + η]."""
    if eta <= 0:
        raise ValueError("η must be positive")
    K0 = centered_matrix(obs, action)
    return moment_LIJ(sys, K0, (E1 - eta, E1 + eta), (E2 - eta, E2 + eta))


def qm_surface(sys, obs, action, E1s, E2s, etas) -> np.ndarray:
    """qm_statistic on the full (E1, E2, η) grid."""
    K0 = centered_matrix(obs, action)
    out = np.empty((len(etas), len(E1s), len(E2s)))
    for h, eta in enumerate(etas):
        for i, E1 in enumerate(E1s):
            for j, E2 in enumerate(E2s):
                out[h, i, j] = moment_LIJ(sys, K0, (E1 - eta, E1 + eta), (E2 - eta, E2 + eta))
    return out


def mixtoergo_check(sys: EigenSystem, K, I, tau: float, eta: float, action=None) -> tuple[float, float]:
    """(L_I^{τ,η}, max_j L_{J_j, J'_j}) where J_j = [a+2ηj, a+2η(j+1)] tile
    I = [a, b] and J'_j = J^{2η}_{E_j+τ} ∩ I; the first never exceeds the second."""
    K = _matrix_of(K, action)
    lhs = moment_L_tau_eta(sys, K, I, tau, eta)
    a, b = map(float, I)
    nseg = max(1, int(np.ceil((b - a) / (2 * eta))))
    best = 0.0
    for j in range(nseg):
        lo = a + 2 * eta * j
        E = lo + eta
        J2 = (max(E + tau - 2 * eta, a), min(E + tau + 2 * eta, b))
        if J2[0] > J2[1]:
            continue
        best = max(best, moment_LIJ(sys, K, (lo, min(lo + 2 * eta, b)), J2))
    return lhs, best


# -- covariance ----------------------------------------------------------------------

def empirical_covariance(a, action: PermutationAction, g: GroupElement, r: int = 1):
    """σ_N(g) = (1/N) Σ_x conj(a(x) − ⟨a⟩) ⊗ (a(g.x) − ⟨a⟩); complex for
    r = 1 and an r×r matrix otherwise."""
    A = np.asarray(a).reshape(r, action.N)
    u = A - A.mean(axis=1, keepdims=True)
    pg = action.perm(g)
    M = u.conj() @ u[:, pg].T / action.N
    return complex(M[0, 0]) if r == 1 else M


def sigma_norm(a, action, g, r: int = 1) -> float:
    s = empirical_covariance(a, action, g, r)
    return abs(s) if r == 1 else float(np.linalg.norm(s, 2))


# -- observable generators ----------------------------------------------------------

def iid_observable(N: int, seed: int, law: str = "pm1", r: int = 1) -> Observable:
    rng = make_rng(seed)
    n = N * r
    if law == "pm1":
        a = rng.choice([-1.0, 1.0], size=n)
    elif law == "disc":
        rad, ang = np.sqrt(rng.uniform(0, 1, n)), rng.uniform(0, 2 * np.pi, n)
        a = rad * np.exp(1j * ang)
    else:
        raise ValueError(f"unknown law {law!r}")
    return diagonal_observable(a, r, f"iid-{law}")


def cycle_sign_observable(action: PermutationAction, g: GroupElement) -> Observable:
    """+1 on ⌊L/2⌋ consecutive sites of every L-cycle of ρ_N(g), −1 elsewhere."""
    pg = action.perm(g)
    a = -np.ones(action.N)
    seen = np.zeros(action.N, bool)
    for x0 in range(action.N):
        if seen[x0]:
            continue
        cyc = [x0]
        seen[x0] = True
        y = pg[x0]
        while y != x0:
            cyc.append(y)
            seen[y] = True
            y = pg[y]
        a[cyc[:len(cyc) // 2]] = 1.0
    return diagonal_observable(a, 1, "cycle-sign")


def fourier_observable(action: PermutationAction, u) -> Observable:
    """a(n) = exp(2πi n·u/M) on the torus (Z/MZ)^d."""
    M = action.meta["M"]
    n = torus_coords(action)
    a = np.exp(2j * np.pi * (n @ np.asarray(u)) / M)
    return diagonal_observable(a, 1, "fourier")


def block_indicator_observable(action: PermutationAction) -> Observable:
    """+1 on copies 1, 2 and −1 on copies 3, 4 of the glued-copies graph,
    0 on the remaining copies and the hub."""
    meta = action.meta
    if meta.get("kind") != "glued_copies" or meta["copies"] < 4:
        raise ValueError("needs a glued-copies action with at least four copies")
    n = meta["copy_size"]
    a = np.zeros(action.N)
    a[0:2 * n] = 1.0
    a[2 * n:4 * n] = -1.0
    return diagonal_observable(a, 1, "block-indicator")


def c4_sign_observable(n: int) -> Observable:
    """On C4 × [n] (index i*n + x): +1 for i ∈ {0, 2}, −1 for i ∈ {1, 3}."""
    a = np.repeat([1.0, -1.0, 1.0, -1.0], n)
    return diagonal_observable(a, 4, "c4-sign")


C4_BASIS = np.array([[0.5, 0.5, 0.5, 0.5],
                     [1 / np.sqrt(2), 0, -1 / np.sqrt(2), 0],
                     [0, 1 / np.sqrt(2), 0, -1 / np.sqrt(2)],
                     [0.5, -0.5, 0.5, -0.5]]).T
C4_EIGENVALUES = np.array([2.0, 0.0, 0.0, -2.0])


def diagonal_expectations(V: np.ndarray, a) -> np.ndarray:
    """⟨ψ_j, a ψ_j⟩ for every column ψ_j of V."""
    return np.einsum("xa,x,xa->a", V.conj(), np.asarray(a), V).real
