"""Data collection and maximum-likelihood probability extraction.

A measured basis yields a relative-frequency vector, either exact Born
probabilities (the noiseless, infinite-copy limit) or a finite multinomial
draw. `ml_probabilities` turns accumulated frequencies into jointly physical
probabilities by fitting the maximum-likelihood state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import solvers
from .qcore import (
    DensityMatrix,
    DimensionMismatchError,
    VonNeumannBasis,
    born_probabilities,
)
from .solvers import BornConstraints, SolverFailure, apg_minimize

INFINITE = "infinite"


@dataclass(frozen=True)
class FrequencyRecord:
    """One measured basis and its relative-frequency vector."""

    basis: VonNeumannBasis
    nu: np.ndarray
    n_copies: object = INFINITE  # positive int, or INFINITE for exact data

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if nu.ndim != 1 or nu.size != self.basis.dim:
            raise ValueError("frequency vector length must equal the dimension")
        if nu.min() < 0 or abs(nu.sum() - 1.0) > 1e-10:
            raise ValueError("frequencies must be nonnegative and sum to 1")
        nu = nu.copy()
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        if self.n_copies != INFINITE and (not isinstance(self.n_copies, (int, np.integer))
                                          or self.n_copies < 1):
            raise ValueError("n_copies must be a positive integer or 'infinite'")

    @property
    def noiseless(self) -> bool:
        return self.n_copies == INFINITE


@dataclass
class Dataset:
    """Ordered accumulation of frequency records sharing one dimension."""

    dim: int
    records: list = field(default_factory=list)

    def append(self, record: FrequencyRecord) -> None:
        if record.basis.dim != self.dim:
            raise DimensionMismatchError("record dimension differs from dataset")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def noiseless(self) -> bool:
        return all(rec.noiseless for rec in self.records)


@dataclass(frozen=True)
class MlProbabilities:
    """Physical probability vectors and the ML state achieving them."""

    vectors: tuple
    ml_state: DensityMatrix


def simulate_record(rho_true: DensityMatrix, basis: VonNeumannBasis,
                    n_copies=INFINITE,
                    rng: np.random.Generator | None = None) -> FrequencyRecord:
    """Measure a basis on the true state; exact or multinomial frequencies."""
    if rho_true.dim != basis.dim:
        raise DimensionMismatchError("state and basis dimensions differ")
    p = born_probabilities(rho_true, basis)
    p = p / p.sum()
    if n_copies == INFINITE:
        return FrequencyRecord(basis, p, INFINITE)
    if rng is None:
        raise ValueError("finite-copy simulation requires an rng")
    counts = rng.multinomial(int(n_copies), p)
    return FrequencyRecord(basis, counts / float(n_copies), int(n_copies))


def ml_probabilities(data: Dataset,
                     x0: np.ndarray | None = None,
                     gtol: float = 1e-9,
                     max_iter: int = 20000) -> MlProbabilities:
    """Maximum-likelihood fit of the accumulated dataset.

    Maximizes sum_{k,j} nu_jk ln p_jk(rho) over the state space with equal
    per-basis weights, via accelerated projected gradient. For noiseless data
    the frequencies are jointly physical already, so the least-squares
    feasibility fit is used instead (same optimum, better conditioned where
    nu has exact zeros) and the returned vectors are the frequencies.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    unitaries = [rec.basis.unitary for rec in data.records]
    nus = [rec.nu for rec in data.records]
    d = data.dim
    if x0 is None:
        x0 = np.eye(d, dtype=complex) / d

    if data.noiseless:
        cons = BornConstraints(unitaries, nus)

        def lsq(x):
            c = cons.residual(x)
            return 0.5 * float(c @ c), cons.adjoint(c)

        res = apg_minimize(lsq, x0, gtol=max(1e-11, gtol * 1e-2),
                           max_iter=min(max_iter, 8000),
                           lipschitz0=1.01 * cons.op_norm(),
                           fixed_lipschitz=True)
        x = res.x
        resid = float(np.max(np.abs(cons.residual(x))))
        if resid > 1e-6:
            # highly redundant constraint sets can stall the gradient fit;
            # alternating projections onto the affine slice and the state
            # set settles feasibility before declaring the data infeasible
            x, resid = solvers.alternating_projection(
                x, solvers.AffineSlice(cons), cons, tol=1e-9)
        # the state is a warm start and diagnostic; the probability vectors
        # are the exact frequencies, so only true infeasibility is fatal
        if resid > 1e-6:
            raise SolverFailure("noiseless frequencies are jointly infeasible",
                                grad_norm=res.grad_norm, residual=resid)
        state = DensityMatrix(solvers.project_state(x))
        return MlProbabilities(tuple(np.asarray(nu) for nu in nus), state)

    nu_stack = np.concatenate(nus)
    adjoint_map = BornConstraints(unitaries, [np.zeros(d)] * len(unitaries))

    def neg_loglik(x):
        val = 0.0
        grads = np.zeros_like(nu_stack)
        for i, u in enumerate(unitaries):
            p = np.einsum("ij,ik,kj->j", u.conj(), x, u).real
            p = np.clip(p, 1e-14, None)
            nu = nu_stack[i * d:(i + 1) * d]
            val -= float(nu @ np.log(p))
            grads[i * d:(i + 1) * d] = -nu / p
        return val, adjoint_map.adjoint(grads)

    res = apg_minimize(neg_loglik, x0, gtol=gtol, max_iter=max_iter,
                       lipschitz0=10.0 * len(data) * d)
    if not res.converged:
        raise SolverFailure("ML solver did not converge",
                            grad_norm=res.grad_norm)
    state = DensityMatrix(solvers.project_state(res.x))
    vectors = tuple(born_probabilities(state, rec.basis)
                    for rec in data.records)
    vectors = tuple(v / v.sum() for v in vectors)
    return MlProbabilities(vectors, state)
