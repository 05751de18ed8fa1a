"""Adaptive compressive quantum state tomography simulation library."""

from .qcore import (
    DensityMatrix,
    DimensionMismatchError,
    InvalidStateError,
    QubitStructure,
    VonNeumannBasis,
    born_probabilities,
    eigenbasis,
    fidelity,
    linear_entropy,
    numerical_rank,
    project_to_state_space,
    von_neumann_entropy,
)
from .randgen import (
    RngStream,
    haar_unitary,
    local_rh_basis,
    random_pauli_basis,
    random_state_hs,
    rh_basis,
    rs_basis,
)
from .measurement import (
    INFINITE,
    Dataset,
    FrequencyRecord,
    MlProbabilities,
    ml_probabilities,
    simulate_record,
)
from .convexgeom import (
    LINEAR,
    VN,
    ConvexSetSpec,
    IccResult,
    Witness,
    cs_trace_min,
    icc_probe,
    min_entropy_state,
    nearest_product_basis,
    s_cvx,
)
from .schemes import (
    EnsembleSummary,
    RunTrace,
    SchemeConfig,
    SchemeKind,
    StepRecord,
    k0_bound,
    premature_stop_rule,
    replay_s_cvx,
    run_ensemble,
    run_scheme,
    run_trial,
)
from . import bench

__version__ = "0.1.0"
