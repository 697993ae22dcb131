"""Tests for configs, seed streams, CSV/record output, and experiment runs."""

import json
import math

import numpy as np
import pytest

from abckit.harness import (
    ExperimentConfig,
    PRESETS,
    build_summary,
    get_sequential,
    list_presets,
    load_config,
    load_record,
    preset_config,
    resolve_threads,
    run_config,
    run_experiment,
    save_config,
    write_csv,
)
from abckit.models import get_model
from abckit.seeding import child_stream, seed_stream


def toy_config(out_dir, **overrides):
    base = dict(
        seed=7,
        out_dir=str(out_dir),
        model="discrete_toy",
        summary="identity",
        summary_params={"dim": 1},
        engine="rejection",
        budget=300,
        observed=[2.0],
        engine_params={"h": 0.5, "metric_diag": [1.0]},
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSeedStreams:
    def test_same_inputs_reproduce_the_stream(self):
        first = seed_stream(12345, "train").standard_normal(4)
        second = seed_stream(12345, "train").standard_normal(4)
        assert np.array_equal(first, second)

    def test_sibling_streams_are_uncorrelated(self):
        a = seed_stream(12345, "train", 0).standard_normal(10_000)
        b = seed_stream(12345, "train", 1).standard_normal(10_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.03

    def test_distinct_labels_give_distinct_streams(self):
        a = seed_stream(12345, "train").standard_normal(8)
        b = seed_stream(12345, "test").standard_normal(8)
        assert not np.array_equal(a, b)

    def test_child_streams_do_not_depend_on_creation_order(self):
        parent = seed_stream(9, "root")
        direct = child_stream(parent, "a", 2).standard_normal(3)
        parent = seed_stream(9, "root")
        child_stream(parent, "unrelated", 5)  # a sibling created earlier
        again = child_stream(parent, "a", 2).standard_normal(3)
        assert np.array_equal(direct, again)


class TestExperimentConfig:
    def test_toml_round_trip_is_lossless(self, tmp_path):
        config = toy_config(tmp_path / "run", threads=2,
                            model_params={"scale": 1.5, "labels": ["a", "b"]})
        save_config(config, tmp_path / "c.toml")
        assert load_config(tmp_path / "c.toml") == config

    def test_json_round_trip_is_lossless(self, tmp_path):
        config = toy_config(tmp_path / "run", truth=[], observed=[1.0, -2.0, 3.5])
        save_config(config, tmp_path / "c.json")
        assert load_config(tmp_path / "c.json") == config

    def test_hash_is_stable_across_formats(self, tmp_path):
        config = toy_config(tmp_path / "run")
        save_config(config, tmp_path / "c.toml")
        save_config(config, tmp_path / "c.json")
        hashes = {
            config.config_hash(),
            load_config(tmp_path / "c.toml").config_hash(),
            load_config(tmp_path / "c.json").config_hash(),
        }
        assert len(hashes) == 1

    def test_hash_changes_when_a_field_changes(self, tmp_path):
        base = toy_config(tmp_path / "run")
        changed = toy_config(tmp_path / "run", seed=8)
        assert base.config_hash() != changed.config_hash()

    def test_unknown_keys_are_rejected(self):
        with pytest.raises(ValueError, match="unknown configuration key.*bandwith"):
            ExperimentConfig.from_dict({"seed": 1, "bandwith": 0.5})

    def test_seed_must_fit_64_bits(self, tmp_path):
        with pytest.raises(ValueError, match="64-bit"):
            toy_config(tmp_path, seed=2**64)

    def test_nested_param_values_must_be_plain(self, tmp_path):
        with pytest.raises(TypeError, match="engine_params.h"):
            toy_config(tmp_path, engine_params={"h": {"nested": {"too": "deep"}}})

    def test_unsupported_extension_is_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="extension"):
            save_config(toy_config(tmp_path), tmp_path / "c.yaml")


class TestWriteCsv:
    def test_uses_crlf_line_endings_and_header(self, tmp_path):
        path = tmp_path / "out.csv"
        write_csv(path, ("a", "b"), [(1, 2.5), (3, -0.125)])
        raw = path.read_bytes()
        assert raw.count(b"\r\n") == 3
        assert raw.startswith(b"a,b\r\n")

    def test_floats_round_trip_exactly(self, tmp_path):
        rng = np.random.default_rng(4)
        values = list(rng.standard_normal(50)) + [1 / 3, math.pi, 1e-300, -1e300]
        path = tmp_path / "floats.csv"
        write_csv(path, ("x",), [(v,) for v in values])
        lines = path.read_text().splitlines()[1:]
        assert [float(line) for line in lines] == values

    def test_booleans_and_missing_values(self, tmp_path):
        path = tmp_path / "cells.csv"
        write_csv(path, ("flag", "note"), [(True, None), (False, "ok")])
        assert path.read_bytes() == b"flag,note\r\ntrue,\r\nfalse,ok\r\n"

    def test_returns_the_digest_of_the_bytes(self, tmp_path):
        import hashlib

        path = tmp_path / "d.csv"
        digest = write_csv(path, ("x",), [(1,)])
        assert digest == hashlib.sha256(path.read_bytes()).hexdigest()

    def test_dict_rows_must_cover_all_columns(self, tmp_path):
        with pytest.raises(KeyError, match="missing column"):
            write_csv(tmp_path / "bad.csv", ("a", "b"), [{"a": 1}])

    def test_quotes_cells_containing_commas(self, tmp_path):
        path = tmp_path / "q.csv"
        write_csv(path, ("name",), [("x,y",)])
        assert path.read_bytes() == b'name\r\n"x,y"\r\n'


class TestResolveThreads:
    def test_explicit_request_wins(self, monkeypatch):
        monkeypatch.setenv("ABC_THREADS", "8")
        assert resolve_threads(2) == 2

    def test_environment_fallback(self, monkeypatch):
        monkeypatch.setenv("ABC_THREADS", "5")
        assert resolve_threads(0) == 5

    def test_default_is_single_threaded(self, monkeypatch):
        monkeypatch.delenv("ABC_THREADS", raising=False)
        assert resolve_threads(0) == 1

    def test_bad_environment_value_is_an_error(self, monkeypatch):
        monkeypatch.setenv("ABC_THREADS", "many")
        with pytest.raises(ValueError, match="ABC_THREADS"):
            resolve_threads(0)


class TestBuildSummary:
    def test_unknown_name_lists_options(self):
        model = get_model("normal_mean")
        with pytest.raises(ValueError, match="unknown summary.*sample_mean"):
            build_summary("not_a_summary", model)

    def test_unknown_parameter_is_rejected(self):
        model = get_model("normal_mean")
        with pytest.raises(ValueError, match="unknown summary.*key"):
            build_summary("sample_mean", model, params={"bogus": 1})

    def test_default_summary_tracks_the_model(self):
        assert build_summary("default", get_model("mg1")).dim == 20

    def test_sequential_registry_rejects_unknown_names(self):
        with pytest.raises(KeyError, match="unknown sequential model"):
            get_sequential("not_a_model")


class TestRunExperiment:
    def test_minimal_rejection_run_writes_samples(self, tmp_path):
        record = run_experiment(toy_config(tmp_path / "run"))
        assert record.status == "ok"
        lines = (tmp_path / "run" / "samples.csv").read_text().splitlines()
        assert lines[0] == "level,weight"
        assert len(lines) >= 2  # header plus at least one accepted draw

    def test_record_lists_every_output_digest(self, tmp_path):
        import hashlib

        record = run_experiment(toy_config(tmp_path / "run"))
        assert set(record.outputs) == {"config.json", "provenance.json", "samples.csv"}
        for name, digest in record.outputs.items():
            data = (tmp_path / "run" / name).read_bytes()
            assert hashlib.sha256(data).hexdigest() == digest

    def test_record_json_matches_the_returned_record(self, tmp_path):
        record = run_experiment(toy_config(tmp_path / "run"))
        loaded = load_record(tmp_path / "run" / "record.json")
        assert loaded == record

    def test_same_seed_is_byte_identical_across_thread_counts(self, tmp_path):
        base = dict(model="normal_mean", summary="sample_mean", engine="rejection",
                    budget=500, truth=[1.0], seed=9)
        run_experiment(ExperimentConfig(out_dir=str(tmp_path / "t1"), threads=1, **base))
        run_experiment(ExperimentConfig(out_dir=str(tmp_path / "t3"), threads=3, **base))
        assert ((tmp_path / "t1" / "samples.csv").read_bytes()
                == (tmp_path / "t3" / "samples.csv").read_bytes())

    def test_failure_still_writes_the_record_and_removes_outputs(self, tmp_path):
        config = toy_config(tmp_path / "bad", engine_params={"h": -1.0})
        with pytest.raises(ValueError, match="bandwidth"):
            run_experiment(config)
        record = load_record(tmp_path / "bad" / "record.json")
        assert record.status == "failed"
        assert "bandwidth" in record.error
        assert record.outputs == {}
        leftovers = {p.name for p in (tmp_path / "bad").iterdir()}
        assert leftovers == {"record.json"}

    def test_run_config_loads_and_runs_a_file(self, tmp_path):
        config = toy_config(tmp_path / "run")
        save_config(config, tmp_path / "experiment.toml")
        record = run_config(tmp_path / "experiment.toml")
        assert record.status == "ok"
        assert (tmp_path / "run" / "samples.csv").exists()

    def test_exactly_one_data_source_is_required(self, tmp_path):
        config = toy_config(tmp_path / "run", observed=[2.0], truth=[1.0])
        with pytest.raises(ValueError, match="exactly one"):
            run_experiment(config)

    def test_unknown_engine_parameter_is_rejected(self, tmp_path):
        config = toy_config(tmp_path / "run",
                            engine_params={"h": 0.5, "metric_diag": [1.0],
                                           "bogus_knob": 3})
        with pytest.raises(ValueError, match="unknown engine_params key.*bogus_knob"):
            run_experiment(config)

    def test_unknown_engine_is_rejected(self, tmp_path):
        config = toy_config(tmp_path / "run", engine="vibes")
        with pytest.raises(ValueError, match="unknown engine"):
            run_experiment(config)

    def test_mcmc_run_reports_chain_rate(self, tmp_path):
        config = ExperimentConfig(seed=3, out_dir=str(tmp_path / "m"),
                                  model="normal_mean", summary="sample_mean",
                                  engine="mcmc", budget=800, truth=[0.5])
        record = run_experiment(config)
        assert record.status == "ok"
        assert 0.0 < record.acceptance_rates["chain"] <= 1.0
        assert record.simulation_counts["pilot"] + record.simulation_counts["chain"] <= 800

    def test_semiauto_run_writes_fit_artifacts(self, tmp_path):
        config = ExperimentConfig(seed=4, out_dir=str(tmp_path / "sa"), model="gk",
                                  model_params={"n_obs": 100},
                                  summary="order_subset",
                                  summary_params={"m": 11, "powers": [1, 2, 3]},
                                  engine="semiauto", budget=700,
                                  truth=[3.0, 1.0, 2.0, 0.5])
        record = run_experiment(config)
        assert {"samples.csv", "region.csv", "coefficients.csv",
                "bic.csv"} <= set(record.outputs)
        region_lines = (tmp_path / "sa" / "region.csv").read_text().splitlines()
        assert len(region_lines) == 5  # header plus one row per parameter

    def test_sequential_run_traces_every_step(self, tmp_path):
        observed = [[0.3], [-1.2], [0.8], [2.1], [-0.4]]
        config = ExperimentConfig(seed=5, out_dir=str(tmp_path / "sq"),
                                  model="normal_variance", engine="sequential",
                                  budget=2000, observed=observed,
                                  engine_params={"h": 0.5, "log_rejuvenation": True})
        record = run_experiment(config)
        trace = (tmp_path / "sq" / "trace.csv").read_text().splitlines()
        assert len(trace) == 1 + len(observed)  # one parameter per step
        assert record.simulation_counts["total"] == 400 * len(observed)

    def test_baseline_indirect_writes_a_point_estimate(self, tmp_path):
        config = ExperimentConfig(seed=8, out_dir=str(tmp_path / "b"), model="mg1",
                                  summary="mg1_aux", engine="baseline", budget=2400,
                                  truth=[1.0, 5.0, 0.2],
                                  engine_params={"method": "indirect",
                                                 "n_replicates": 20,
                                                 "xatol": 1e-3, "fatol": 1e-6})
        record = run_experiment(config)
        lines = (tmp_path / "b" / "estimate.csv").read_text().splitlines()
        assert lines[0] == "parameter,estimate"
        assert len(lines) == 4


class TestPresets:
    def test_every_preset_is_constructible(self, tmp_path):
        for name in list_presets():
            config = preset_config(name, seed=1, out_dir=str(tmp_path / name))
            assert config.preset == name
            assert config.budget == PRESETS[name]["budget"]

    def test_unknown_preset_is_rejected(self):
        with pytest.raises(ValueError, match="unknown preset"):
            preset_config("nonesuch")

    def test_unknown_preset_parameter_is_rejected(self, tmp_path):
        config = preset_config("gk-table", seed=1, out_dir=str(tmp_path / "g"),
                               bogus=3)
        with pytest.raises(ValueError, match="unknown gk-table parameter"):
            run_experiment(config)

    def test_lv_bias_writes_one_row_per_cell(self, tmp_path):
        config = preset_config("lv-bias", seed=11, out_dir=str(tmp_path / "lv"),
                               n_obs_grid=[3, 6], n_reps=1, n_particles=60)
        record = run_experiment(config)
        assert record.status == "ok"
        lines = (tmp_path / "lv" / "bias_curve.csv").read_text().splitlines()
        assert lines[0] == "n_obs,param,method,abs_bias,rmse"
        assert len(lines) == 1 + 2 * 3 * 2  # grid x parameters x methods

    def test_gk_table_has_a_row_per_method_and_parameter(self, tmp_path):
        config = preset_config("gk-table", seed=11, out_dir=str(tmp_path / "gk"),
                               n_datasets=2)
        config.budget = 400
        record = run_experiment(config)
        assert record.status == "ok"
        lines = (tmp_path / "gk" / "loss_table.csv").read_text().splitlines()
        assert lines[0] == "method,parameter,mean_loss,n_datasets,n_failures"
        assert len(lines) == 1 + 2 * 4  # two methods x four parameters

    def test_preset_outputs_are_identical_across_thread_counts(self, tmp_path):
        outputs = {}
        for threads in (1, 3):
            config = preset_config("gk-table", seed=11,
                                   out_dir=str(tmp_path / f"t{threads}"),
                                   n_datasets=2)
            config.budget = 400
            config.threads = threads
            run_experiment(config)
            outputs[threads] = (tmp_path / f"t{threads}" / "loss_table.csv").read_bytes()
        assert outputs[1] == outputs[3]

    def test_config_json_reproduces_the_run(self, tmp_path):
        config = preset_config("mg1-table", seed=5, out_dir=str(tmp_path / "a"),
                               n_datasets=2)
        config.budget = 400
        run_experiment(config)
        stored = json.loads((tmp_path / "a" / "config.json").read_text())
        stored["out_dir"] = str(tmp_path / "b")
        rerun = ExperimentConfig.from_dict(stored)
        run_experiment(rerun)
        assert ((tmp_path / "a" / "loss_table.csv").read_bytes()
                == (tmp_path / "b" / "loss_table.csv").read_bytes())
