"""Batch experiment driver.

Subcommands:

* `run` — execute every (dimension, rank, scheme) cell of a config file,
  persisting one JSON trace per trial plus a deterministic summary CSV;
* `bench` — emit the analytic scaling table as CSV;
* `plotdata` — reshape traces/summaries into plot-ready text series;
* `verify` — run the acceptance test suite.

Exit statuses: 0 success, 2 configuration error, 3 solver failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from .bench import build_comparison
from .measurement import INFINITE
from .qcore import DensityMatrix, VonNeumannBasis
from .schemes import (
    QUBIT_ONLY_KINDS,
    RunTrace,
    SchemeConfig,
    SchemeKind,
    StepRecord,
    run_trial,
    summarize_traces,
)
from .solvers import InfeasibleConstraints, SolverFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

JOBS_ENV = "ACTTOMO_JOBS"

FIGURES = ("scvx-decay", "kic-vs-r", "hct", "diagnostics", "ic-histogram")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One batch of ensemble cells: every (d, r, scheme) combination."""

    dims: tuple
    ranks: tuple
    schemes: tuple  # of SchemeConfig
    n_states: int
    out: str
    seed: int

    def validate(self) -> None:
        if not self.dims or any(d < 2 for d in self.dims):
            raise ConfigError("dims must be a non-empty list of integers >= 2")
        if not self.ranks or any(r < 1 for r in self.ranks):
            raise ConfigError("ranks must be a non-empty list of integers >= 1")
        if self.n_states < 1:
            raise ConfigError("n_states must be positive")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        for cfg in self.schemes:
            if cfg.kind in QUBIT_ONLY_KINDS:
                for d in self.dims:
                    if d & (d - 1):
                        raise ConfigError(
                            f"{cfg.kind.value} requires power-of-two "
                            f"dimension, got {d}")


_SCHEME_KEYS = {"kind", "entropy_objective", "ic_threshold",
                "hybrid_threshold", "n_copies", "max_bases", "seed",
                "diagnostics_full"}


def _scheme_from_mapping(entry, seed: int) -> SchemeConfig:
    if isinstance(entry, str):
        entry = {"kind": entry}
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError("each scheme needs at least a 'kind'")
    unknown = set(entry) - _SCHEME_KEYS
    if unknown:
        raise ConfigError(f"unknown scheme keys: {sorted(unknown)}")
    kwargs = dict(entry)
    kwargs.setdefault("seed", seed)
    if kwargs.get("n_copies") in (None, "infinite"):
        kwargs["n_copies"] = INFINITE
    try:
        return SchemeConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        seed = int(raw.get("seed", 0))
        cfg = ExperimentConfig(
            dims=tuple(int(d) for d in raw["dims"]),
            ranks=tuple(int(r) for r in raw["ranks"]),
            schemes=tuple(_scheme_from_mapping(s, seed)
                          for s in raw["schemes"]),
            n_states=int(raw.get("n_states", 20)),
            out=str(raw.get("out", "results")),
            seed=seed,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    cfg.validate()
    return cfg


def scheme_label(cfg: SchemeConfig) -> str:
    label = cfg.kind.value
    if cfg.entropy_objective != "VN":
        label += "_SL"
    return label


# ---------------------------------------------------------------------------
# trace persistence


def _complex_to_list(m: np.ndarray) -> list:
    """Row-major real/imag interleaved flattening; floats round-trip
    exactly through JSON's shortest-repr formatting."""
    flat = np.asarray(m, dtype=complex).ravel()
    out = np.empty(2 * flat.size)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out.tolist()


def _complex_from_list(vals, d: int) -> np.ndarray:
    arr = np.asarray(vals, dtype=float)
    return (arr[0::2] + 1j * arr[1::2]).reshape(d, d)


def _config_to_mapping(cfg: SchemeConfig) -> dict:
    return {
        "kind": cfg.kind.value,
        "entropy_objective": cfg.entropy_objective,
        "ic_threshold": cfg.ic_threshold,
        "hybrid_threshold": cfg.hybrid_threshold,
        "n_copies": None if cfg.n_copies == INFINITE else cfg.n_copies,
        "max_bases": cfg.max_bases,
        "seed": cfg.seed,
        "diagnostics_full": cfg.diagnostics_full,
    }


def config_hash(cfg: SchemeConfig) -> str:
    blob = json.dumps(_config_to_mapping(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def trace_to_mapping(trace: RunTrace) -> dict:
    return {
        "schema": "acttomo-trace-v1",
        "config": _config_to_mapping(trace.config),
        "config_hash": config_hash(trace.config),
        "dim": trace.dim,
        "true_state_rank": trace.true_state_rank,
        "k_ic": trace.k_ic,
        "steps": [{
            "k": st.k,
            "s_cvx": st.s_cvx,
            "est_entropy": st.est_entropy,
            "est_rank": st.est_rank,
            "est_fidelity_to_true": st.est_fidelity_to_true,
            "wall_time": st.wall_time,
            "basis": _complex_to_list(st.basis.unitary),
        } for st in trace.steps],
        "final_estimator": (None if trace.final_estimator is None
                            else _complex_to_list(trace.final_estimator.data)),
    }


def trace_from_mapping(doc: dict) -> RunTrace:
    d = int(doc["dim"])
    cfg_map = dict(doc["config"])
    if cfg_map.get("n_copies") is None:
        cfg_map["n_copies"] = INFINITE
    config = SchemeConfig(**cfg_map)
    steps = [StepRecord(
        k=int(st["k"]),
        basis=VonNeumannBasis(_complex_from_list(st["basis"], d)),
        s_cvx=float(st["s_cvx"]),
        est_entropy=float(st["est_entropy"]),
        est_rank=int(st["est_rank"]),
        est_fidelity_to_true=float(st["est_fidelity_to_true"]),
        wall_time=float(st["wall_time"]),
    ) for st in doc["steps"]]
    final = doc["final_estimator"]
    return RunTrace(
        config=config, dim=d,
        true_state_rank=int(doc["true_state_rank"]),
        steps=steps,
        k_ic=None if doc["k_ic"] is None else int(doc["k_ic"]),
        final_estimator=(None if final is None
                         else DensityMatrix(_complex_from_list(final, d))))


def write_trace(trace: RunTrace, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(trace_to_mapping(trace), fh, indent=1)
        fh.write("\n")


def read_trace(path: str) -> RunTrace:
    with open(path) as fh:
        return trace_from_mapping(json.load(fh))


# ---------------------------------------------------------------------------
# run


def _run_cell(d: int, r: int, cfg: SchemeConfig, n_states: int, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(run_trial, d, r, cfg, i): i
                       for i in range(n_states)}
            traces = [None] * n_states
            for fut, i in futures.items():
                traces[i] = fut.result()
    else:
        traces = [run_trial(d, r, cfg, i) for i in range(n_states)]
    return summarize_traces(d, r, cfg, traces)


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else repr(float(x))


def write_summary_csv(summaries, path: str) -> None:
    """Deterministic cell summary; rows sorted by (d, r, label)."""
    lines = ["d,r,scheme,n_trials,mean_k_ic,stderr_k_ic,n_not_reached"]
    for s in sorted(summaries,
                    key=lambda s: (s.dim, s.rank, scheme_label(s.config))):
        lines.append(",".join([
            str(s.dim), str(s.rank), scheme_label(s.config),
            str(s.n_states), _fmt(s.mean_k_ic), _fmt(s.stderr_k_ic),
            str(s.n_not_reached)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_timings_csv(summaries, path: str) -> None:
    lines = ["d,r,scheme,mean_runtime_s"]
    for s in sorted(summaries,
                    key=lambda s: (s.dim, s.rank, scheme_label(s.config))):
        lines.append(",".join([str(s.dim), str(s.rank),
                               scheme_label(s.config),
                               f"{s.mean_runtime_s:.6f}"]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _resolve_jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get(JOBS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{JOBS_ENV} must be an integer, got {env!r}")
    return os.cpu_count() or 1


def cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = ExperimentConfig(
                dims=config.dims, ranks=config.ranks,
                schemes=tuple(SchemeConfig(**{**_config_to_mapping(c),
                                              "n_copies": c.n_copies,
                                              "seed": args.seed})
                              for c in config.schemes),
                n_states=config.n_states, out=config.out, seed=args.seed)
        jobs = _resolve_jobs(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or config.out
    summaries = []
    try:
        os.makedirs(out, exist_ok=True)
        for d in config.dims:
            for r in config.ranks:
                if r > d:
                    continue
                for cfg in config.schemes:
                    if args.threshold is not None:
                        cfg = SchemeConfig(**{**_config_to_mapping(cfg),
                                              "n_copies": cfg.n_copies,
                                              "ic_threshold": args.threshold})
                    label = scheme_label(cfg)
                    if not args.quiet:
                        print(f"cell d={d} r={r} {label} "
                              f"({config.n_states} trials)", flush=True)
                    summary = _run_cell(d, r, cfg, config.n_states, jobs)
                    summaries.append(summary)
                    cell_dir = os.path.join(out, "traces",
                                            f"d{d}_r{r}_{label}")
                    os.makedirs(cell_dir, exist_ok=True)
                    for i, trace in enumerate(summary.traces):
                        write_trace(trace, os.path.join(
                            cell_dir, f"trial_{i:03d}.json"))
        write_summary_csv(summaries, os.path.join(out, "summary.csv"))
        write_timings_csv(summaries, os.path.join(out, "timings.csv"))
    except (SolverFailure, InfeasibleConstraints) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"wrote {os.path.join(out, 'summary.csv')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    pairs = [(d, r) for d in args.dims for r in args.ranks if r <= d]
    table = build_comparison([], dims_ranks=pairs)
    lines = table.as_csv_lines()
    try:
        if args.out:
            with open(args.out, "w") as fh:
                fh.write("\n".join(lines) + "\n")
        else:
            print("\n".join(lines))
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------------------
# plotdata


def _read_summary_rows(path: str) -> list:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def _series_scvx(traces) -> list:
    """k vs mean s_cvx, one series per scheme label."""
    groups: dict = {}
    for t in traces:
        groups.setdefault(scheme_label(t.config), []).append(t)
    out = []
    for label in sorted(groups):
        ts = groups[label]
        max_len = max(len(t.steps) for t in ts)
        rows = np.zeros((len(ts), max_len))
        for i, t in enumerate(ts):
            s = t.s_curve
            rows[i, :len(s)] = s
            if len(s) < max_len:
                rows[i, len(s):] = 0.0 if t.k_ic is not None else s[-1]
        out.append((label, "k", "mean_s_cvx",
                    [(k + 1, m) for k, m in enumerate(rows.mean(axis=0))]))
    return out


def _series_kic(summary_rows, with_bench: bool) -> list:
    labels = sorted({row["scheme"] for row in summary_rows})
    out = []
    pairs = sorted({(int(row["d"]), int(row["r"])) for row in summary_rows})
    for label in labels:
        pts = [(int(row["r"]), float(row["mean_k_ic"]))
               for row in summary_rows if row["scheme"] == label]
        out.append((label, "r", "mean_k_ic", sorted(pts)))
    if with_bench:
        table = build_comparison([], dims_ranks=pairs)
        by_label: dict = {}
        for row in table.rows:
            if row.kind == "bases":
                by_label.setdefault(row.label, []).append((row.r, row.value))
        for label in sorted(by_label):
            out.append((label, "r", "k_ic_baseline", sorted(by_label[label])))
    return out


def _series_diagnostics(traces) -> list:
    out = []
    for field_name in ("est_entropy", "est_rank", "est_fidelity_to_true"):
        groups: dict = {}
        for t in traces:
            groups.setdefault(scheme_label(t.config), []).append(t)
        for label in sorted(groups):
            ts = groups[label]
            max_len = max(len(t.steps) for t in ts)
            rows = np.full((len(ts), max_len), np.nan)
            for i, t in enumerate(ts):
                for j, st in enumerate(t.steps):
                    rows[i, j] = getattr(st, field_name)
            means = np.nanmean(rows, axis=0)
            out.append((f"{label}_{field_name}", "k", field_name,
                        [(k + 1, m) for k, m in enumerate(means)]))
    return out


def _emit_series(series, out_dir: str, figure: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for label, xname, yname, points in series:
        path = os.path.join(out_dir, f"{figure}_{label}.txt")
        with open(path, "w") as fh:
            fh.write(f"# {xname} {yname}\n")
            for x, y in points:
                fh.write(f"{x} {repr(float(y))}\n")


def _emit_histogram(values, out_dir: str, threshold: float) -> None:
    """Histogram of log10 s_cvx for the replayed-states completeness study."""
    os.makedirs(out_dir, exist_ok=True)
    vals = np.asarray(values, dtype=float)
    logs = np.log10(np.clip(vals, 1e-16, None))
    edges = np.linspace(-16.0, 0.0, 33)
    counts, _ = np.histogram(logs, bins=edges)
    path = os.path.join(out_dir, "ic-histogram.txt")
    with open(path, "w") as fh:
        fh.write(f"# log10_s_cvx count (ic threshold {threshold:g}, "
                 f"log10 = {np.log10(threshold):.3f})\n")
        for lo, c in zip(edges[:-1], counts):
            fh.write(f"{lo:.2f} {c}\n")


def cmd_plotdata(args) -> int:
    out_dir = args.out or "plotdata"
    try:
        for path in args.inputs:
            if not os.path.exists(path):
                print(f"missing input file: {path}", file=sys.stderr)
                return EXIT_IO
        if args.figure == "ic-histogram":
            values = []
            for path in args.inputs:
                with open(path) as fh:
                    values.extend(float(tok) for tok in fh.read().split())
            threshold = args.threshold if args.threshold is not None else 1e-6
            _emit_histogram(values, out_dir, threshold)
        elif args.figure in ("scvx-decay", "diagnostics"):
            traces = [read_trace(p) for p in args.inputs]
            series = (_series_scvx(traces) if args.figure == "scvx-decay"
                      else _series_diagnostics(traces))
            _emit_series(series, out_dir, args.figure)
        else:  # kic-vs-r, hct
            rows = []
            for path in args.inputs:
                rows.extend(_read_summary_rows(path))
            if args.figure == "hct":
                rows = [r for r in rows
                        if r["scheme"].startswith(("HCT", "ACT"))]
            series = _series_kic(rows, with_bench=args.figure == "kic-vs-r")
            _emit_series(series, out_dir, args.figure)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"wrote {args.figure} series to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    import pytest

    candidates = []
    if args.config:
        candidates.append(args.config)
    here = os.path.dirname(os.path.abspath(__file__))
    for base in (os.getcwd(), os.path.abspath(os.path.join(here, "..", ".."))):
        candidates.append(os.path.join(base, "tests", "test_acceptance.py"))
    target = next((c for c in candidates if os.path.exists(c)), None)
    if target is None:
        print("acceptance suite not found (looked for tests/"
              "test_acceptance.py); pass its path via --config",
              file=sys.stderr)
        return EXIT_CONFIG
    flags = ["-q"] if args.quiet else ["-v"]
    return int(pytest.main(flags + [target]))


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acttomo",
        description="Adaptive compressive tomography simulation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output directory/file")
        p.add_argument("--quiet", action="store_true")

    p_run = sub.add_parser("run", help="execute the cells of a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--jobs", type=int, default=None,
                       help=f"worker processes (or ${JOBS_ENV})")
    p_run.add_argument("--threshold", type=float, default=None,
                       help="override the IC threshold")
    common(p_run)

    p_bench = sub.add_parser("bench", help="emit analytic scaling table CSV")
    p_bench.add_argument("--dims", type=int, nargs="*", default=[16])
    p_bench.add_argument("--ranks", type=int, nargs="*", default=[1, 2, 3])
    common(p_bench)

    p_plot = sub.add_parser("plotdata", help="emit plot-ready text series")
    p_plot.add_argument("--figure", required=True, choices=FIGURES)
    p_plot.add_argument("inputs", nargs="+",
                        help="trace/summary/value files, per figure")
    p_plot.add_argument("--threshold", type=float, default=None,
                        help="IC threshold recorded in histogram header")
    common(p_plot)

    p_verify = sub.add_parser("verify", help="run the acceptance suite")
    p_verify.add_argument("--config", default=None,
                          help="path to the acceptance test file")
    p_verify.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "bench": cmd_bench,
                "plotdata": cmd_plotdata, "verify": cmd_verify}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
