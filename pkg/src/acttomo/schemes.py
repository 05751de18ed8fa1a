"""Iterative tomography loops: adaptive, product-adaptive, hybrid, and the
random baselines, with per-step diagnostics and completeness-based
termination."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import convexgeom, measurement, randgen
from .convexgeom import (
    VN,
    LINEAR,
    ConvexSetSpec,
    Witness,
    feasible_point,
    icc_probe,
    min_entropy_state,
    nearest_product_basis,
    s_cvx,
)
from .measurement import INFINITE, Dataset, ml_probabilities, simulate_record
from .qcore import (
    DensityMatrix,
    QubitStructure,
    VonNeumannBasis,
    eigenbasis,
    fidelity,
    numerical_rank,
    von_neumann_entropy,
)
from .randgen import (
    PauliExhaustedError,
    RngStream,
    local_rh_basis,
    random_pauli_basis,
    random_state_hs,
    rh_basis,
    rs_basis,
)
from .solvers import SolverFailure, project_state


class SchemeKind(str, Enum):
    ACT = "ACT"
    PACT = "PACT"
    HCT_RH = "HCT_RH"
    HCT_RS = "HCT_RS"
    RP = "RP"
    RH = "RH"
    RS = "RS"
    LOCAL_RH = "LOCAL_RH"
    RANDOM_RANK_DEFICIENT = "RANDOM_RANK_DEFICIENT"


ADAPTIVE_KINDS = {SchemeKind.ACT, SchemeKind.PACT,
                  SchemeKind.HCT_RH, SchemeKind.HCT_RS}
QUBIT_ONLY_KINDS = {SchemeKind.PACT, SchemeKind.RP, SchemeKind.LOCAL_RH}


@dataclass(frozen=True)
class SchemeConfig:
    kind: SchemeKind = SchemeKind.ACT
    entropy_objective: str = VN
    ic_threshold: float = convexgeom.DEFAULT_IC_THRESHOLD
    hybrid_threshold: float = 0.5
    n_copies: object = INFINITE
    max_bases: int | None = None  # None means d + 1 at run time
    seed: int = 0
    diagnostics_full: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.entropy_objective not in (VN, LINEAR):
            raise ValueError("entropy_objective must be VN or LINEAR")
        if not 0.0 < self.hybrid_threshold < 1.0:
            raise ValueError("hybrid_threshold must lie in (0, 1)")
        if self.max_bases is not None and self.max_bases < 1:
            raise ValueError("max_bases must be at least 1")


@dataclass
class StepRecord:
    k: int
    basis: VonNeumannBasis
    s_cvx: float
    est_entropy: float
    est_rank: int
    est_fidelity_to_true: float
    wall_time: float


@dataclass
class RunTrace:
    config: SchemeConfig
    true_state_rank: int
    dim: int
    steps: list
    k_ic: int | None
    final_estimator: DensityMatrix | None

    @property
    def s_curve(self) -> list:
        return [st.s_cvx for st in self.steps]

    @property
    def bases(self) -> list:
        return [st.basis for st in self.steps]


def k0_bound(d: int, r: int) -> int:
    """Bases sufficient once the true eigenbasis is measured:
    ceil((r^2 - r)/(d - 1)) + 1."""
    if not 1 <= r <= d:
        raise ValueError("need 1 <= r <= d")
    return int(np.ceil((r * r - r) / (d - 1))) + 1


def _first_basis(kind: SchemeKind, d: int, structure, rng, history):
    # (P)ACT/HCT start from a randomly rotated computational basis; random
    # schemes draw from their own generator.
    if kind == SchemeKind.RP:
        basis, label = random_pauli_basis(structure, rng, history)
        history.add(label)
        return basis
    if kind == SchemeKind.RS:
        return rs_basis(d, rng)
    if kind == SchemeKind.LOCAL_RH:
        return local_rh_basis(structure, rng)
    return rh_basis(d, rng)


def _random_rank_deficient_basis(cons, ml_state, d, rng):
    """Eigenbasis of a random rank-deficient near-feasible state.

    A random Hermitian perturbation of the ML state is projected back onto
    the data convex set, then its spectrum is truncated at a rank drawn
    uniformly from [1, d-1]."""
    q = int(rng.integers(1, d))
    h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (h + h.conj().T) / (2.0 * np.sqrt(d))
    x = feasible_point(cons, ml_state + 0.5 * h, tol=1e-7, max_iter=2000)
    evals, vecs = np.linalg.eigh(0.5 * (x + x.conj().T))
    w = np.clip(evals, 0.0, None)
    w[np.argsort(w)[:d - q]] = 0.0
    total = w.sum()
    if total <= 1e-14:
        w = np.zeros(d)
        w[np.argmax(evals)] = 1.0
        total = 1.0
    rho = (vecs * (w / total)) @ vecs.conj().T
    return eigenbasis(DensityMatrix(project_state(rho)))


def run_scheme(rho_true: DensityMatrix, config: SchemeConfig,
               rng: np.random.Generator | None = None,
               stream_id: int = 0,
               first_basis: VonNeumannBasis | None = None) -> RunTrace:
    """Run one tomography scheme to completeness or to the basis budget."""
    d = rho_true.dim
    kind = config.kind
    structure = None
    if kind in QUBIT_ONLY_KINDS:
        structure = QubitStructure.for_dim(d)
    if rng is None:
        rng = RngStream(config.seed, stream_id).generator()
    max_bases = config.max_bases if config.max_bases is not None else d + 1

    witness = Witness(random_state_hs(d, d, rng))
    dataset = Dataset(d)
    pauli_history: set = set()
    steps: list = []
    first_icc = None
    warm = None
    ent_warm: dict = {}
    ml_x0 = None
    k_ic = None
    final_estimator = None
    next_basis = None
    adaptive_now = kind in (SchemeKind.ACT, SchemeKind.PACT)

    for k in range(1, max_bases + 1):
        t0 = time.perf_counter()
        if k == 1:
            basis = first_basis if first_basis is not None else _first_basis(
                kind, d, structure, rng, pauli_history)
        else:
            basis = next_basis
        record = simulate_record(rho_true, basis, config.n_copies, rng)
        dataset.append(record)
        ml = ml_probabilities(dataset, x0=ml_x0)
        ml_x0 = ml.ml_state.data
        set_spec = ConvexSetSpec.from_pairs(
            list(zip([rec.basis for rec in dataset.records], ml.vectors)))
        try:
            icc = icc_probe(set_spec, witness, warm=warm)
        except SolverFailure as exc:
            raise SolverFailure(
                f"ICC probe failed at step k={k} of {kind.value}: {exc}",
                residual=exc.residual) from exc
        warm = icc.warm
        if first_icc is None:
            first_icc = icc
        s = s_cvx(icc, first_icc)

        if s < config.ic_threshold:
            k_ic = k
            final_estimator = icc.rho_max
            est = icc.rho_max
            steps.append(_step(k, basis, s, est, rho_true, t0))
            break

        # pick the next basis (also yields the step's diagnostic estimator)
        est = icc.rho_max
        rho_hat = None
        if k < max_bases:
            if kind in (SchemeKind.HCT_RH, SchemeKind.HCT_RS) and not adaptive_now:
                adaptive_now = s <= config.hybrid_threshold
            use_adaptive = (kind in (SchemeKind.ACT, SchemeKind.PACT)
                            or (kind in (SchemeKind.HCT_RH, SchemeKind.HCT_RS)
                                and adaptive_now))
            if use_adaptive or config.diagnostics_full:
                rho_hat = min_entropy_state(
                    set_spec, config.entropy_objective,
                    starts=[ml.ml_state.data], rng=rng,
                    warm=ent_warm)
                est = rho_hat
            if use_adaptive:
                if kind == SchemeKind.PACT:
                    next_basis = nearest_product_basis(rho_hat, structure, rng)
                else:
                    next_basis = eigenbasis(rho_hat)
            elif kind == SchemeKind.RP:
                try:
                    next_basis, label = random_pauli_basis(
                        structure, rng, pauli_history)
                    pauli_history.add(label)
                except PauliExhaustedError:
                    steps.append(_step(k, basis, s, est, rho_true, t0))
                    break
            elif kind == SchemeKind.RS or kind == SchemeKind.HCT_RS:
                next_basis = rs_basis(d, rng)
            elif kind == SchemeKind.LOCAL_RH:
                next_basis = local_rh_basis(structure, rng)
            elif kind == SchemeKind.RANDOM_RANK_DEFICIENT:
                next_basis = _random_rank_deficient_basis(
                    set_spec.born_constraints(), ml.ml_state.data, d, rng)
            else:  # RH and the random phase of HCT_RH
                next_basis = rh_basis(d, rng)
        steps.append(_step(k, basis, s, est, rho_true, t0))

    return RunTrace(config=config, true_state_rank=numerical_rank(rho_true),
                    dim=d, steps=steps, k_ic=k_ic,
                    final_estimator=final_estimator)


def _step(k, basis, s, est, rho_true, t0) -> StepRecord:
    return StepRecord(
        k=k, basis=basis, s_cvx=s,
        est_entropy=von_neumann_entropy(est),
        est_rank=numerical_rank(est),
        est_fidelity_to_true=fidelity(est, rho_true),
        wall_time=time.perf_counter() - t0)


def premature_stop_rule(entropies, delta_s: float = 1e-4) -> bool:
    """Early-stop signal from the estimator-entropy diagnostics.

    True once the latest entropy increment is below `delta_s` and the
    increment sequence is decreasing; the current estimator then serves as
    an approximately complete reconstruction.
    """
    entropies = list(entropies)
    if len(entropies) < 3:
        raise ValueError("need at least 3 entropy diagnostics")
    diffs = np.diff(entropies)
    decreasing = bool(np.all(diffs[1:] <= diffs[:-1] + 1e-12))
    return bool(decreasing and diffs[-1] < delta_s)


@dataclass
class EnsembleSummary:
    dim: int
    rank: int
    config: SchemeConfig
    n_states: int
    k_ic_values: list
    mean_k_ic: float
    stderr_k_ic: float
    n_not_reached: int
    mean_s_curve: list
    mean_runtime_s: float
    traces: list = field(default_factory=list, repr=False)


def run_ensemble(d: int, r: int, n_states: int,
                 config: SchemeConfig,
                 trial_fn=None) -> EnsembleSummary:
    """Independent trials on fresh random rank-r states, one rng stream each.

    `trial_fn(trial_index) -> RunTrace` may be injected to run trials out of
    process; the default executes inline.
    """
    if n_states < 1:
        raise ValueError("n_states must be positive")
    if trial_fn is None:
        trial_fn = lambda i: run_trial(d, r, config, i)
    traces = [trial_fn(i) for i in range(n_states)]
    return summarize_traces(d, r, config, traces)


def run_trial(d: int, r: int, config: SchemeConfig, trial_index: int) -> RunTrace:
    """One seeded ensemble trial: draw the state, then run the scheme."""
    rng = RngStream(config.seed, trial_index).generator()
    rho_true = random_state_hs(d, r, rng)
    return run_scheme(rho_true, config, rng=rng)


def summarize_traces(d: int, r: int, config: SchemeConfig,
                     traces) -> EnsembleSummary:
    traces = list(traces)
    k_vals = [t.k_ic for t in traces]
    reached = np.array([k for k in k_vals if k is not None], dtype=float)
    mean = float(reached.mean()) if reached.size else float("nan")
    stderr = (float(reached.std(ddof=1) / np.sqrt(reached.size))
              if reached.size > 1 else 0.0)
    max_len = max(len(t.steps) for t in traces)
    curves = np.zeros((len(traces), max_len))
    for i, t in enumerate(traces):
        s = t.s_curve
        curves[i, :len(s)] = s
        if t.k_ic is not None and len(s) < max_len:
            curves[i, len(s):] = 0.0  # complete: the gap stays closed
        elif t.k_ic is None and len(s) < max_len:
            curves[i, len(s):] = s[-1]
    runtime = float(sum(st.wall_time for t in traces for st in t.steps)
                    / len(traces))
    return EnsembleSummary(
        dim=d, rank=r, config=config, n_states=len(traces),
        k_ic_values=k_vals, mean_k_ic=mean, stderr_k_ic=stderr,
        n_not_reached=sum(1 for k in k_vals if k is None),
        mean_s_curve=list(curves.mean(axis=0)),
        mean_runtime_s=runtime, traces=list(traces))


def replay_s_cvx(rho_true: DensityMatrix, bases,
                 witness: Witness) -> float:
    """Measure a fixed basis list noiselessly and return the final
    normalized witness gap (completeness indicator for that state)."""
    dataset = Dataset(rho_true.dim)
    first = None
    warm = None
    s = 1.0
    for basis in bases:
        dataset.append(simulate_record(rho_true, basis))
        ml = ml_probabilities(dataset)
        set_spec = ConvexSetSpec.from_pairs(
            list(zip([rec.basis for rec in dataset.records], ml.vectors)))
        icc = icc_probe(set_spec, witness, warm=warm)
        warm = icc.warm
        if first is None:
            first = icc
        s = s_cvx(icc, first)
    return s
