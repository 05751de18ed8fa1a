"""Seeded generation of random states and measurement bases.

All generators consume a numpy Generator. `RngStream` pins down how a
(seed, stream_id) pair maps to one: independent streams for ensemble
trials come from distinct stream ids under one master seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import (
    DensityMatrix,
    QubitStructure,
    VonNeumannBasis,
    eigenbasis,
)

PAULI_AXES = ("x", "y", "z")

# Columns are the eigenkets of sigma_x, sigma_y, sigma_z (+1 eigenvector first).
_SQ2 = 1.0 / np.sqrt(2.0)
PAULI_EIGENBASES = {
    "x": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "y": np.array([[_SQ2, _SQ2], [1j * _SQ2, -1j * _SQ2]], dtype=complex),
    "z": np.eye(2, dtype=complex),
}


class PauliExhaustedError(RuntimeError):
    """All 3^n Pauli basis labels have been used up."""


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.stream_id])

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)


def _ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix.

    The R-diagonal phases are divided out so the decomposition has a
    positive-diagonal R, which is what makes QL exactly Haar.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    a = _ginibre(d, d, rng)
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def rh_basis(d: int, rng: np.random.Generator) -> VonNeumannBasis:
    """Random basis whose kets are the columns of a Haar unitary."""
    return VonNeumannBasis(haar_unitary(d, rng))


def rs_basis(d: int, rng: np.random.Generator) -> VonNeumannBasis:
    """Eigenbasis of a random full-rank Hilbert-Schmidt-uniform state."""
    a = _ginibre(d, d, rng)
    rho = a.conj().T @ a
    rho = rho / np.trace(rho).real
    return eigenbasis(DensityMatrix(rho))


def random_state_hs(d: int, r: int, rng: np.random.Generator) -> DensityMatrix:
    """Rank-r state A^dag A / tr(A^dag A) with r x d Ginibre A (HS measure)."""
    if not 1 <= r <= d:
        raise ValueError(f"rank {r} out of range for dimension {d}")
    a = _ginibre(r, d, rng)
    rho = a.conj().T @ a
    rho = rho / np.trace(rho).real
    return DensityMatrix(rho)


def pauli_basis_for_label(label: tuple) -> VonNeumannBasis:
    """Tensor product of single-qubit Pauli eigenbases for a label in {x,y,z}^n."""
    u = np.array([[1.0]], dtype=complex)
    for axis in label:
        u = np.kron(u, PAULI_EIGENBASES[axis])
    return VonNeumannBasis(u)


def random_pauli_basis(structure: QubitStructure, rng: np.random.Generator,
                       history: set):
    """Draw an unused Pauli label uniformly; returns (basis, label).

    `history` is the set of labels already measured; sampling is without
    replacement since repeating a basis adds nothing in the noiseless model.
    """
    n = structure.n_qubits
    total = 3 ** n
    if len(history) >= total:
        raise PauliExhaustedError(f"all {total} Pauli bases used")
    while True:
        label = tuple(PAULI_AXES[i] for i in rng.integers(0, 3, size=n))
        if label not in history:
            return pauli_basis_for_label(label), label


def local_rh_basis(structure: QubitStructure,
                   rng: np.random.Generator) -> VonNeumannBasis:
    """Tensor product of independent single-qubit Haar bases."""
    u = np.array([[1.0]], dtype=complex)
    for _ in range(structure.n_qubits):
        u = np.kron(u, haar_unitary(2, rng))
    return VonNeumannBasis(u)
