from __future__ import annotations

import filecmp
import json
import os

import numpy as np
import pytest
import yaml

from acttomo.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    ConfigError,
    config_hash,
    load_config,
    main,
    read_trace,
    scheme_label,
    trace_to_mapping,
    write_trace,
)
from acttomo.schemes import SchemeConfig, run_trial


def write_yaml(path, doc):
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh)
    return str(path)


def minimal_doc(**overrides):
    doc = {
        "dims": [4],
        "ranks": [1],
        "schemes": [{"kind": "ACT", "max_bases": 8}],
        "n_states": 2,
        "seed": 1,
    }
    doc.update(overrides)
    return doc


class TestConfigLoading:
    def test_minimal_config(self, tmp_path):
        cfg = load_config(write_yaml(tmp_path / "c.yaml", minimal_doc()))
        assert cfg.dims == (4,)
        assert cfg.schemes[0].max_bases == 8
        assert cfg.schemes[0].seed == 1  # top-level seed propagates

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/config.yaml")

    def test_missing_kind(self, tmp_path):
        doc = minimal_doc(schemes=[{"max_bases": 5}])
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path / "c.yaml", doc))

    def test_unknown_scheme_key(self, tmp_path):
        doc = minimal_doc(schemes=[{"kind": "ACT", "wat": 1}])
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path / "c.yaml", doc))

    def test_pact_requires_power_of_two(self, tmp_path):
        doc = minimal_doc(dims=[6], schemes=[{"kind": "PACT"}])
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path / "c.yaml", doc))

    def test_bad_dims(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_yaml(tmp_path / "c.yaml",
                                   minimal_doc(dims=[1])))


class TestSchemeLabel:
    def test_plain(self):
        assert scheme_label(SchemeConfig(kind="RH")) == "RH"

    def test_linear_suffix(self):
        cfg = SchemeConfig(kind="ACT", entropy_objective="LINEAR")
        assert scheme_label(cfg) == "ACT_SL"


class TestTracePersistence:
    def test_round_trip(self, tmp_path):
        cfg = SchemeConfig(kind="ACT", max_bases=8, seed=5)
        trace = run_trial(4, 1, cfg, 0)
        path = str(tmp_path / "t.json")
        write_trace(trace, path)
        back = read_trace(path)
        assert back.k_ic == trace.k_ic
        assert back.dim == trace.dim
        assert back.config == trace.config
        assert back.s_curve == trace.s_curve
        assert np.array_equal(back.final_estimator.data,
                              trace.final_estimator.data)
        for a, b in zip(back.steps, trace.steps):
            assert np.array_equal(a.basis.unitary, b.basis.unitary)
            assert a.wall_time == b.wall_time
        # mapping level: parse(write(trace)) == write-mapping exactly
        with open(path) as fh:
            assert json.load(fh) == trace_to_mapping(back)

    def test_config_hash_stable(self):
        a = SchemeConfig(kind="ACT", seed=5)
        b = SchemeConfig(kind="ACT", seed=5)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(SchemeConfig(kind="RH", seed=5))


class TestCmdRun:
    def test_smoke_and_determinism(self, tmp_path):
        cfg_path = write_yaml(tmp_path / "c.yaml",
                              minimal_doc(out=str(tmp_path / "out1")))
        assert main(["run", "--config", cfg_path, "--jobs", "1",
                     "--quiet"]) == EXIT_OK
        summary = tmp_path / "out1" / "summary.csv"
        lines = summary.read_text().strip().splitlines()
        assert lines[0] == ("d,r,scheme,n_trials,mean_k_ic,stderr_k_ic,"
                            "n_not_reached")
        assert len(lines) == 2
        traces = sorted((tmp_path / "out1" / "traces").rglob("*.json"))
        assert len(traces) == 2

        assert main(["run", "--config", cfg_path, "--jobs", "1", "--quiet",
                     "--out", str(tmp_path / "out2")]) == EXIT_OK
        assert filecmp.cmp(summary, tmp_path / "out2" / "summary.csv",
                           shallow=False)

    def test_invalid_config_exits_2(self, tmp_path):
        doc = minimal_doc(dims=[6], schemes=[{"kind": "PACT"}])
        cfg_path = write_yaml(tmp_path / "c.yaml", doc)
        assert main(["run", "--config", cfg_path, "--quiet"]) == EXIT_CONFIG

    def test_missing_config_exits_2(self):
        assert main(["run", "--config", "/no/such.yaml",
                     "--quiet"]) == EXIT_CONFIG

    def test_unwritable_out_exits_4(self, tmp_path):
        cfg_path = write_yaml(tmp_path / "c.yaml", minimal_doc())
        rc = main(["run", "--config", cfg_path, "--jobs", "1", "--quiet",
                   "--out", "/proc/nope"])
        assert rc == EXIT_IO

    def test_jobs_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ACTTOMO_JOBS", "not-a-number")
        cfg_path = write_yaml(tmp_path / "c.yaml", minimal_doc())
        assert main(["run", "--config", cfg_path,
                     "--quiet"]) == EXIT_CONFIG


class TestCmdBench:
    def test_csv_output(self, tmp_path):
        out = str(tmp_path / "bench.csv")
        assert main(["bench", "--dims", "16", "--ranks", "1", "2", "3",
                     "--out", out, "--quiet"]) == EXIT_OK
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "d,r,label,value,kind"
        assert len(lines) == 1 + 3 * 6  # six baseline rows per (d, r)

    def test_empty_ranks_header_only(self, tmp_path):
        out = str(tmp_path / "bench.csv")
        assert main(["bench", "--dims", "16", "--ranks",
                     "--out", out, "--quiet"]) == EXIT_OK
        assert open(out).read().strip() == "d,r,label,value,kind"


class TestCmdPlotdata:
    @pytest.fixture()
    def run_dir(self, tmp_path):
        cfg_path = write_yaml(tmp_path / "c.yaml",
                              minimal_doc(out=str(tmp_path / "out")))
        assert main(["run", "--config", cfg_path, "--jobs", "1",
                     "--quiet"]) == EXIT_OK
        return tmp_path / "out"

    def test_scvx_decay_monotone(self, run_dir, tmp_path):
        traces = [str(p) for p in sorted((run_dir / "traces").rglob("*.json"))]
        out = str(tmp_path / "pd")
        assert main(["plotdata", "--figure", "scvx-decay", "--out", out,
                     "--quiet"] + traces) == EXIT_OK
        rows = [ln.split() for ln in
                open(os.path.join(out, "scvx-decay_ACT.txt"))
                if not ln.startswith("#")]
        vals = [float(v) for _, v in rows]
        assert all(b <= a + 1e-8 for a, b in zip(vals, vals[1:]))

    def test_kic_vs_r_includes_baselines(self, run_dir, tmp_path):
        out = str(tmp_path / "pd")
        assert main(["plotdata", "--figure", "kic-vs-r", "--out", out,
                     "--quiet", str(run_dir / "summary.csv")]) == EXIT_OK
        files = sorted(os.listdir(out))
        # one measured series plus the basis-count baselines
        assert "kic-vs-r_ACT.txt" in files
        assert "kic-vs-r_KW.txt" in files
        assert len(files) > 1

    def test_ic_histogram(self, tmp_path):
        vals = tmp_path / "vals.txt"
        vals.write_text("1e-8\n0.01\n0.2\n")
        out = str(tmp_path / "pd")
        assert main(["plotdata", "--figure", "ic-histogram", "--out", out,
                     "--threshold", "1e-6", "--quiet",
                     str(vals)]) == EXIT_OK
        text = open(os.path.join(out, "ic-histogram.txt")).read()
        assert text.startswith("#")
        assert "1e-06" in text
        counts = [int(ln.split()[1]) for ln in text.splitlines()[1:]]
        assert sum(counts) == 3

    def test_missing_input_exits_4(self, tmp_path):
        assert main(["plotdata", "--figure", "scvx-decay", "--quiet",
                     "--out", str(tmp_path / "pd"),
                     "/no/such/trace.json"]) == EXIT_IO
