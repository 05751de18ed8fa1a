"""Dense complex Hermitian linear algebra and quantum-state primitives.

Everything here operates on plain numpy arrays wrapped in thin validated
containers. All functions are pure; containers are immutable by convention
(the wrapped arrays are never mutated after construction).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERM_TOL = 1e-10
PSD_TOL = -1e-9
TRACE_TOL = 1e-10
UNITARY_TOL = 1e-10
ENTROPY_EIG_FLOOR = 1e-14
DEFAULT_RANK_TOL = 1e-6


class InvalidStateError(ValueError):
    """Raised when a matrix fails the density-matrix invariants."""


class DimensionMismatchError(ValueError):
    """Raised when two objects of incompatible dimension are combined."""


def _as_complex(a) -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidStateError(f"expected a square matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DensityMatrix:
    """A d x d Hermitian, PSD, unit-trace complex matrix."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_complex(self.data)
        d = arr.shape[0]
        if np.linalg.norm(arr - arr.conj().T) > HERM_TOL * d:
            raise InvalidStateError("matrix is not Hermitian within tolerance")
        evals = np.linalg.eigvalsh(arr)
        if evals.min() < PSD_TOL:
            raise InvalidStateError(
                f"matrix is not PSD: smallest eigenvalue {evals.min():.3e}"
            )
        if abs(np.trace(arr).real - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace is {np.trace(arr).real!r}, expected 1")
        arr = 0.5 * (arr + arr.conj().T)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @staticmethod
    def pure(ket) -> "DensityMatrix":
        """Rank-1 projector |psi><psi| from a (non-normalized) ket."""
        v = np.asarray(ket, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return DensityMatrix(np.outer(v, v.conj()))

    @staticmethod
    def maximally_mixed(d: int) -> "DensityMatrix":
        return DensityMatrix(np.eye(d, dtype=complex) / d)


@dataclass(frozen=True)
class VonNeumannBasis:
    """An orthonormal basis of d kets, stored as the columns of a unitary."""

    unitary: np.ndarray

    def __post_init__(self):
        arr = _as_complex(self.unitary)
        d = arr.shape[0]
        if np.linalg.norm(arr.conj().T @ arr - np.eye(d)) > UNITARY_TOL * d:
            raise InvalidStateError("basis matrix is not unitary within tolerance")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "unitary", arr)

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]

    @staticmethod
    def computational(d: int) -> "VonNeumannBasis":
        return VonNeumannBasis(np.eye(d, dtype=complex))

    def ket(self, j: int) -> np.ndarray:
        return self.unitary[:, j]


@dataclass(frozen=True)
class QubitStructure:
    """An n-qubit system; dimension is 2**n by construction."""

    n_qubits: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @staticmethod
    def for_dim(d: int) -> "QubitStructure":
        n = int(round(np.log2(d)))
        if 2 ** n != d:
            raise ValueError(f"dimension {d} is not a power of two")
        return QubitStructure(n)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-sum_i lam_i ln lam_i in nats; eigenvalues <= 1e-14 contribute zero."""
    evals = np.linalg.eigvalsh(rho.data)
    evals = evals[evals > ENTROPY_EIG_FLOOR]
    return float(max(0.0, -np.sum(evals * np.log(evals))))


def linear_entropy(rho: DensityMatrix) -> float:
    """1 - tr(rho^2), in [0, 1 - 1/d]."""
    purity = np.sum(np.abs(rho.data) ** 2)  # tr(rho^2) = ||rho||_F^2 for Hermitian
    return float(max(0.0, 1.0 - purity))


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(f"dims {rho.dim} and {sigma.dim} differ")
    evals, vecs = np.linalg.eigh(rho.data)
    sq = (vecs * np.sqrt(np.clip(evals, 0.0, None))) @ vecs.conj().T
    inner = sq @ sigma.data @ sq
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    root_sum = np.sum(np.sqrt(np.clip(w, 0.0, None)))
    return float(min(1.0, root_sum ** 2))


def numerical_rank(rho: DensityMatrix, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of eigenvalues above rel_tol times the largest one."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    evals = np.linalg.eigvalsh(rho.data)
    lam_max = evals.max()
    return int(np.sum(evals > rel_tol * lam_max))


def eigenbasis(rho: DensityMatrix) -> VonNeumannBasis:
    """Orthonormal eigenvectors as basis columns, sorted by descending eigenvalue.

    Deterministic: stable sort, and each column is phase-normalized so its
    first component of non-negligible magnitude is real positive.
    """
    evals, vecs = np.linalg.eigh(rho.data)
    order = np.argsort(-evals, kind="stable")
    vecs = vecs[:, order]
    vecs = _phase_normalize_columns(vecs)
    return VonNeumannBasis(vecs)


def _phase_normalize_columns(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    d = vecs.shape[0]
    for j in range(vecs.shape[1]):
        col = out[:, j]
        idx = np.argmax(np.abs(col) > 1e-12)
        pivot = col[idx]
        if abs(pivot) > 0:
            out[:, j] = col * (pivot.conjugate() / abs(pivot))
    return out


def born_probabilities(rho: DensityMatrix, basis: VonNeumannBasis) -> np.ndarray:
    """p_j = <b_j| rho |b_j>, clamped at 0, summing to 1."""
    if rho.dim != basis.dim:
        raise DimensionMismatchError(f"dims {rho.dim} and {basis.dim} differ")
    p = np.einsum("ij,ik,kj->j", basis.unitary.conj(), rho.data, basis.unitary).real
    return np.clip(p, 0.0, None)


def project_to_state_space(H: np.ndarray) -> DensityMatrix:
    """Frobenius projection of a Hermitian matrix onto {rho >= 0, tr rho = 1}."""
    H = 0.5 * (H + H.conj().T)
    evals, vecs = np.linalg.eigh(H)
    w = project_to_simplex(evals)
    rho = (vecs * w) @ vecs.conj().T
    return DensityMatrix(rho)


def project_to_simplex(y: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.size + 1)
    cond = u - css / k > 0
    rho = k[cond][-1]
    theta = css[rho - 1] / rho
    return np.clip(y - theta, 0.0, None)
