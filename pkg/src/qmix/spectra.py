"""Dense eigendecompositions, eigenvalue counting and spectral measures."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .actions import SchreierOperator

MAGIC = b"QMIXEIGV"
_HEADER = struct.Struct("<8sII")


class SpectralError(ValueError):
    pass


@dataclass
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: SchreierOperator | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def residual(self, matrix=None) -> float:
        """max_α ‖P v_α − λ_α v_α‖₂ / ‖P‖."""
        P = matrix if matrix is not None else self.source.matrix
        V = self.eigenvectors
        R = P @ V - V * self.eigenvalues
        scale = max(np.abs(self.eigenvalues).max(), 1e-300)
        return float(np.linalg.norm(R, axis=0).max() / scale)

    def gram_error(self) -> float:
        V = self.eigenvectors
        return float(np.abs(V.conj().T @ V - np.eye(V.shape[1])).max())

    def clusters(self, tol: float = 1e-9) -> list[slice]:
        """Maximal runs of eigenvalues closer than tol·max(1,|λ|)."""
        lam = self.eigenvalues
        gaps = np.diff(lam) > tol * np.maximum(1.0, np.abs(lam[1:]))
        cuts = np.concatenate([[0], np.flatnonzero(gaps) + 1, [lam.size]])
        return [slice(a, b) for a, b in zip(cuts[:-1], cuts[1:])]


def _fix_signs(V: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Make the first component of modulus > tol real and positive."""
    first = np.argmax(np.abs(V) > tol, axis=0)
    piv = V[first, np.arange(V.shape[1])]
    phase = piv / np.abs(piv)
    return V / phase.conj() if np.iscomplexobj(V) else V * np.sign(piv)


def _haar(k: int, rng, real: bool) -> np.ndarray:
    Z = rng.standard_normal((k, k))
    if not real:
        Z = Z + 1j * rng.standard_normal((k, k))
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def eigendecompose(op, rerandomize: bool = False, seed: int = 0,
                   herm_tol: float = 1e-10, cluster_tol: float = 1e-9) -> EigenSystem:
    """Full decomposition of a Hermitian operator.

    Eigenvectors are sign-normalised; with ``rerandomize`` each degenerate
    cluster is rotated by an independent Haar unitary, which probes the
    basis dependence of statistics inside clusters."""
    src = op if isinstance(op, SchreierOperator) else None
    M = op.matrix if src is not None else op
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.conj().T).max() > herm_tol * scale:
        raise SpectralError("operator is not Hermitian")
    real = not np.iscomplexobj(M) or not np.any(M.imag)
    if real:
        M = np.ascontiguousarray(M.real)
    lam, V = sla.eigh(M, driver="evd" if M.shape[0] > 200 else "ev")
    V = _fix_signs(V)
    sys = EigenSystem(lam, V, src, {"real": real, "rerandomized": bool(rerandomize)})
    if rerandomize:
        rng = np.random.Generator(np.random.Philox(seed))
        for s in sys.clusters(cluster_tol):
            k = s.stop - s.start
            if k > 1:
                V[:, s] = V[:, s] @ _haar(k, rng, real)
    return sys


def from_arrays(eigenvalues, eigenvectors, source=None, **meta) -> EigenSystem:
    order = np.argsort(eigenvalues, kind="stable")
    return EigenSystem(np.asarray(eigenvalues)[order], np.asarray(eigenvectors)[:, order], source, meta)


def product_eigensystem(F: np.ndarray, inner: EigenSystem, coupling: str = "cartesian") -> EigenSystem:
    """Separated-variables basis for F ⊗ I + I ⊗ P (cartesian) or F ⊗ P
    (tensor): eigenvectors u_k ⊗ v_j with the block index convention
    (i, x) ↦ i*N + x."""
    mu, U = np.linalg.eigh(F)
    U = _fix_signs(U)
    lam = inner.eigenvalues
    if coupling == "cartesian":
        vals = (mu[:, None] + lam[None, :]).ravel()
    elif coupling == "tensor":
        vals = (mu[:, None] * lam[None, :]).ravel()
    else:
        raise SpectralError(f"unknown coupling {coupling!r}")
    vecs = np.einsum("ik,xj->ixkj", U, inner.eigenvectors).reshape(U.shape[0] * lam.size, -1)
    return from_arrays(vals, vecs, None, coupling=coupling, separated=True)


# -- counting and measures -----------------------------------------------

@dataclass(frozen=True)
class SpectralWindow:
    a: float
    b: float
    indices: np.ndarray

    def __len__(self):
        return self.indices.size


def window(sys: EigenSystem, I) -> SpectralWindow:
    """Λ_I for the closed interval I = (a, b)."""
    a, b = map(float, I)
    lo = np.searchsorted(sys.eigenvalues, a, side="left")
    hi = np.searchsorted(sys.eigenvalues, b, side="right")
    return SpectralWindow(a, b, np.arange(lo, max(lo, hi)))


def count(sys: EigenSystem, I) -> int:
    return len(window(sys, I))


@dataclass(frozen=True)
class PointMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def mass(self, a: float, b: float) -> float:
        m = (self.atoms >= a) & (self.atoms <= b)
        return float(self.weights[m].sum())

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cw[np.searchsorted(self.atoms, t, side="right")]

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.atoms ** k))

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f(self.atoms)))


def empirical_measure(sys: EigenSystem) -> PointMeasure:
    n = sys.dim
    return PointMeasure(sys.eigenvalues.copy(), np.full(n, 1.0 / n))


def spectral_measure_at(sys: EigenSystem, psi) -> PointMeasure:
    psi = np.asarray(psi)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise SpectralError("zero vector")
    if abs(nrm - 1) > 1e-10:
        raise SpectralError("ψ must be a unit vector")
    w = np.abs(sys.eigenvectors.conj().T @ psi) ** 2
    return PointMeasure(sys.eigenvalues.copy(), w)


def kolmogorov_distance(mu: PointMeasure, cdf, grid=None) -> float:
    """sup_t |μ(-∞,t] − F(t)| evaluated at the atoms (both one-sided limits)."""
    t = mu.atoms if grid is None else np.asarray(grid)
    F = cdf(t)
    right = mu.cdf(t)
    left = right - (mu.weights if grid is None else 0.0)
    return float(max(np.abs(right - F).max(), np.abs(left - F).max()))


# -- export -----------------------------------------------------------------

def write_eigenvalues_csv(sys: EigenSystem, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "value"])
        for i, v in enumerate(sys.eigenvalues):
            w.writerow([i, repr(float(v))])


def write_eigenvectors_bin(sys: EigenSystem, path, N: int, r: int = 1) -> None:
    """16-byte header (magic, N, r) then complex128 data, column-major."""
    V = np.asarray(sys.eigenvectors, dtype=np.complex128)
    if V.shape[0] != N * r:
        raise SpectralError("N·r does not match the eigenvector length")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, N, r))
        fh.write(V.tobytes(order="F"))


def read_eigenvectors_bin(path) -> tuple[np.ndarray, int, int]:
    with open(path, "rb") as fh:
        magic, N, r = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MAGIC:
            raise SpectralError("not a qmix eigenvector file")
        data = np.frombuffer(fh.read(), dtype=np.complex128)
    n = N * r
    return data.reshape((n, data.size // n), order="F"), N, r
