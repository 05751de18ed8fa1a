"""Shared fixtures.

The acceptance criteria reuse a handful of expensive d = 16 ensembles, so
those are built once per session and shared. Everything is seeded; the same
seed is used across schemes so that cells with equal (seed, trial) indices
see identical true states (matched-seed comparisons rely on this).
"""

from __future__ import annotations

import hashlib
import os

import numpy as np
import pytest
import yaml

from acttomo.cli import main as cli_main, read_trace, _read_summary_rows
from acttomo.schemes import SchemeConfig, run_ensemble

ACCEPT_SEED = 11
N_STATES = 20

# basis budgets per scheme kind; random Pauli bases may need many draws
# (81 distinct product-Pauli bases exist at d = 16) while adaptive schemes
# finish within a handful
BUDGETS = {
    "ACT": 20, "PACT": 25, "HCT_RH": 25, "HCT_RS": 25,
    "RH": 35, "RS": 35, "LOCAL_RH": 35, "RP": 81,
    "RANDOM_RANK_DEFICIENT": 35,
}


def make_config(kind: str, **overrides) -> SchemeConfig:
    kwargs = dict(kind=kind, max_bases=BUDGETS[kind], seed=ACCEPT_SEED)
    kwargs.update(overrides)
    return SchemeConfig(**kwargs)


def run_cell(d: int, r: int, kind: str, n_states: int = N_STATES,
             **overrides):
    return run_ensemble(d, r, n_states, make_config(kind, **overrides))


def _write_c1_config(path: str, out: str) -> None:
    doc = {
        "dims": [16],
        "ranks": [1, 2, 3],
        "schemes": [{"kind": "ACT", "max_bases": BUDGETS["ACT"]}],
        "n_states": N_STATES,
        "seed": ACCEPT_SEED,
        "out": out,
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh)


def run_c1_cli(root: str, tag: str) -> str:
    """Execute the headline adaptive ensemble through the CLI."""
    out = os.path.join(root, f"c1_{tag}")
    cfg_path = os.path.join(root, f"c1_{tag}.yaml")
    _write_c1_config(cfg_path, out)
    rc = cli_main(["run", "--config", cfg_path, "--jobs", "1", "--quiet"])
    assert rc == 0, f"CLI run exited with status {rc}"
    return out


@pytest.fixture(scope="session")
def accept_root(tmp_path_factory):
    return str(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture(scope="session")
def c1_dir(accept_root):
    """First execution of the headline ensemble (ACT, d=16, r=1..3)."""
    return run_c1_cli(accept_root, "first")


@pytest.fixture(scope="session")
def act_traces(c1_dir):
    """Traces of the headline ensemble keyed by rank."""
    out = {}
    for r in (1, 2, 3):
        cell = os.path.join(c1_dir, "traces", f"d16_r{r}_ACT")
        out[r] = [read_trace(os.path.join(cell, f))
                  for f in sorted(os.listdir(cell))]
    return out


@pytest.fixture(scope="session")
def act_means(c1_dir):
    rows = _read_summary_rows(os.path.join(c1_dir, "summary.csv"))
    means = {}
    for row in rows:
        assert int(row["n_not_reached"]) == 0, \
            f"ACT r={row['r']} had unfinished trials"
        means[int(row["r"])] = float(row["mean_k_ic"])
    return means


@pytest.fixture(scope="session")
def act_linear_runs():
    """Linear-entropy objective, matched seeds with the headline runs."""
    return {r: run_cell(16, r, "ACT", entropy_objective="LINEAR")
            for r in (1, 2)}


@pytest.fixture(scope="session")
def rh_r2():
    return run_cell(16, 2, "RH")


@pytest.fixture(scope="session")
def rp_r2():
    return run_cell(16, 2, "RP")


@pytest.fixture(scope="session")
def pact_r1():
    return run_cell(16, 1, "PACT")


@pytest.fixture(scope="session")
def local_rh_r1():
    return run_cell(16, 1, "LOCAL_RH")


@pytest.fixture(scope="session")
def hct_runs():
    return {r: run_cell(16, r, "HCT_RH") for r in (1, 2)}


@pytest.fixture(scope="session")
def rrd_r2():
    return run_cell(16, 2, "RANDOM_RANK_DEFICIENT")


@pytest.fixture(scope="session")
def all_run_traces(act_traces, act_linear_runs, rh_r2, rp_r2, pact_r1,
                   local_rh_r1, hct_runs, rrd_r2):
    """Every noiseless run of the session, for the property criteria."""
    traces = [t for ts in act_traces.values() for t in ts]
    for summ in (*act_linear_runs.values(), rh_r2, rp_r2, pact_r1,
                 local_rh_r1, *hct_runs.values(), rrd_r2):
        traces.extend(summ.traces)
    return traces


def mean_k(summary) -> float:
    assert summary.n_not_reached == 0, \
        f"{summary.config.kind.value} had unfinished trials"
    return summary.mean_k_ic


def rng_for(*key) -> np.random.Generator:
    words = [int.from_bytes(hashlib.sha256(k.encode()).digest()[:4], "big")
             if isinstance(k, str) else int(k) for k in key]
    return np.random.default_rng(words)
