"""Experiment runner, report files, aggregation, and CLI surface."""

import csv
import json
import math

import pytest

from condtest import models
from condtest.cli import main as cli_main
from condtest.errors import ConfigError, IncompatibleMode, SchemaMismatch
from condtest.harness import (
    ExperimentConfig,
    derive_trial_seeds,
    read_report,
    run,
    summarize,
    summary_text,
    write_summary_csv,
)
from condtest.models import Product, SubcubeBad, Uniform, save_model


@pytest.fixture
def model_files(tmp_path):
    uniform = tmp_path / "uniform8.json"
    save_model(Uniform(8, 2), uniform)
    bad = tmp_path / "bad8.json"
    save_model(SubcubeBad(n=8, A=(3,), sigma=(0, 1, 1, 0, 1, 0, 0, 1)), bad)
    product = tmp_path / "prod4.json"
    save_model(Product.bernoulli(0.6, 4), product)
    uniform4 = tmp_path / "uniform4.json"
    save_model(Uniform(4, 2), uniform4)
    return {"uniform": uniform, "bad": bad, "product": product, "uniform4": uniform4}


def quick_config(files, tmp_path, **kw):
    defaults = dict(
        visible=str(files["uniform"]),
        hidden=str(files["uniform"]),
        oracle="coordinate",
        tester="coordinate-kl",
        eps=1.0,
        trials=5,
        seed=11,
        out=str(tmp_path / "report.ndjson"),
        budget_scale=0.25,
        parallelism=1,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestConfigValidation:
    def test_unknown_tester(self, model_files, tmp_path):
        with pytest.raises(ConfigError, match="tester"):
            quick_config(model_files, tmp_path, tester="nope")

    def test_unknown_oracle(self, model_files, tmp_path):
        with pytest.raises(ConfigError, match="oracle"):
            quick_config(model_files, tmp_path, oracle="nope")

    def test_bad_trials(self, model_files, tmp_path):
        with pytest.raises(ConfigError, match="trials"):
            quick_config(model_files, tmp_path, trials=0)

    def test_incompatible_mode(self, model_files, tmp_path):
        with pytest.raises(IncompatibleMode):
            quick_config(model_files, tmp_path, tester="subcube-kl", oracle="coordinate")

    def test_general_mode_cannot_run_coordinate_tester(self, model_files, tmp_path):
        with pytest.raises(IncompatibleMode):
            quick_config(model_files, tmp_path, oracle="general")

    def test_subcube_mode_runs_coordinate_tester(self, model_files, tmp_path):
        quick_config(model_files, tmp_path, oracle="subcube")

    def test_missing_model_file(self, model_files, tmp_path):
        config = quick_config(model_files, tmp_path, visible=str(tmp_path / "nope.json"))
        with pytest.raises(ConfigError, match="visible"):
            run(config)


class TestRun:
    def test_null_battery(self, model_files, tmp_path):
        config = quick_config(model_files, tmp_path, trials=8)
        report = run(config)
        assert len(report.rows) == 8
        assert report.accept_fraction() >= 2 / 3
        ndjson = tmp_path / "report.ndjson"
        csv_path = tmp_path / "report.csv"
        assert ndjson.exists() and csv_path.exists()
        loaded = read_report(ndjson)
        assert loaded.header["schema_version"] == 1
        assert loaded.header["config"]["tester"] == "coordinate-kl"
        assert "constants_digest" in loaded.header
        assert len(loaded.rows) == 8

    def test_reject_battery(self, model_files, tmp_path):
        config = quick_config(
            model_files, tmp_path, hidden=str(model_files["bad"]), trials=8
        )
        report = run(config)
        assert report.accept_fraction() <= 1 / 3

    def test_rows_echo_query_counters(self, model_files, tmp_path):
        config = quick_config(model_files, tmp_path, trials=3)
        report = run(config)
        for row in report.rows:
            assert row["queries_general"] > 0
            assert row["queries_coordinate"] > 0
            assert row["queries_subcube"] == 0
            assert row["queries_pairwise"] == 0

    def test_estimate_battery(self, model_files, tmp_path):
        config = quick_config(
            model_files,
            tmp_path,
            visible=str(model_files["uniform4"]),
            hidden=str(model_files["product"]),
            oracle="subcube",
            tester="kl-estimate",
            eps=0.3,
            trials=5,
            budget_scale=0.1,
        )
        report = run(config)
        true_kl = models.kl_divergence(
            models.load_model(model_files["product"]), models.load_model(model_files["uniform4"])
        )
        hits = sum(
            abs(row["estimate"] - true_kl) <= 0.3
            for row in report.rows
            if row["estimate"] is not None
        )
        assert hits >= 4
        assert all(row["rounds"] >= 1 for row in report.rows)

    def test_subcube_battery(self, model_files, tmp_path):
        config = quick_config(
            model_files, tmp_path, oracle="subcube", tester="subcube-kl", trials=4,
            budget_scale=0.2,
        )
        report = run(config)
        assert report.accept_fraction() >= 2 / 3
        assert all(row["queries_subcube"] > 0 for row in report.rows)


class TestDeterminism:
    def strip(self, rows):
        return [{k: v for k, v in row.items() if k != "wall_time_s"} for row in rows]

    def test_same_seed_same_rows(self, model_files, tmp_path):
        config_a = quick_config(model_files, tmp_path, out=str(tmp_path / "a.ndjson"))
        config_b = quick_config(model_files, tmp_path, out=str(tmp_path / "b.ndjson"))
        rows_a = self.strip(run(config_a).rows)
        rows_b = self.strip(run(config_b).rows)
        assert rows_a == rows_b

    def test_parallel_matches_serial(self, model_files, tmp_path):
        serial = quick_config(model_files, tmp_path, out=str(tmp_path / "s.ndjson"),
                              trials=6, parallelism=1)
        parallel = quick_config(model_files, tmp_path, out=str(tmp_path / "p.ndjson"),
                                trials=6, parallelism=3)
        assert self.strip(run(serial).rows) == self.strip(run(parallel).rows)

    def test_different_seed_differs(self, model_files, tmp_path):
        a = quick_config(model_files, tmp_path, out=str(tmp_path / "a.ndjson"),
                         hidden=str(model_files["bad"]))
        b = quick_config(model_files, tmp_path, out=str(tmp_path / "b.ndjson"),
                         hidden=str(model_files["bad"]), seed=999)
        qa = [r["queries_coordinate"] for r in run(a).rows]
        qb = [r["queries_coordinate"] for r in run(b).rows]
        assert qa != qb

    def test_seed_derivation_is_stable(self):
        assert derive_trial_seeds(11, 0) == derive_trial_seeds(11, 0)
        assert derive_trial_seeds(11, 1) == derive_trial_seeds(12, 0)


class TestSummarize:
    def test_single_report_identity(self, model_files, tmp_path):
        config = quick_config(model_files, tmp_path, trials=6)
        report = run(config)
        entries = summarize([config.out])
        assert len(entries) == 1
        e = entries[0]
        assert e["trials"] == 6
        assert e["accept_rate"] == report.accept_fraction()
        assert e["accept_ci_low"] <= e["accept_rate"] <= e["accept_ci_high"]
        assert e["queries_max"] >= e["queries_p50"]
        assert 0 < e["budget_ratio_max"] <= 1.0
        assert summary_text(entries)

    def test_two_seeds_pool(self, model_files, tmp_path):
        a = quick_config(model_files, tmp_path, out=str(tmp_path / "a.ndjson"), trials=4)
        b = quick_config(model_files, tmp_path, out=str(tmp_path / "b.ndjson"), trials=4,
                         seed=77)
        run(a)
        run(b)
        entries = summarize([a.out, b.out])
        assert len(entries) == 1
        assert entries[0]["trials"] == 8

    def test_mixed_schema_rejected(self, model_files, tmp_path):
        config = quick_config(model_files, tmp_path, trials=2)
        run(config)
        other = tmp_path / "other.ndjson"
        lines = open(config.out).read().splitlines()
        header = json.loads(lines[0])
        header["header"]["schema_version"] = 99
        with open(other, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            fh.write(lines[1] + "\n")
        with pytest.raises(SchemaMismatch):
            summarize([config.out, str(other)])

    def test_csv_projection(self, model_files, tmp_path):
        config = quick_config(model_files, tmp_path, trials=3)
        run(config)
        with open(tmp_path / "report.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert rows[0]["verdict"] in ("equal", "far-kl")
        out_csv = tmp_path / "summary.csv"
        write_summary_csv(summarize([config.out]), out_csv)
        assert out_csv.exists()


class TestCLI:
    def test_adversary_gen_and_battery(self, tmp_path):
        visible = tmp_path / "uniform.json"
        save_model(Uniform(8, 2), visible)
        hidden = tmp_path / "bad.json"
        code = cli_main([
            "adversary", "gen", "--family", "subcube-bad", "--n", "8", "--eps", "0.6",
            "--seed", "5", "--out", str(hidden),
        ])
        assert code == 0
        spec = models.load_model(hidden)
        assert isinstance(spec, SubcubeBad)
        report_path = tmp_path / "report.ndjson"
        code = cli_main([
            "test", "--visible", str(visible), "--hidden", str(hidden),
            "--tester", "coordinate-kl", "--eps", "1.0", "--trials", "4",
            "--seed", "3", "--budget-scale", "0.25", "--parallel", "1",
            "--out", str(report_path),
        ])
        assert code == 0
        assert read_report(report_path).rows
        code = cli_main(["summarize", str(report_path), "--csv", str(tmp_path / "s.csv")])
        assert code == 0
        assert (tmp_path / "s.csv").exists()

    def test_matched_ising_gen_defaults_to_table(self, tmp_path):
        out = tmp_path / "mi.json"
        code = cli_main([
            "adversary", "gen", "--family", "matched-ising", "--n", "8", "--eps", "0.3",
            "--seed", "2", "--out", str(out),
        ])
        assert code == 0
        spec = models.load_model(out)
        assert spec.beta == pytest.approx(4.0 * 0.3 / math.sqrt(8))

    def test_estimate_cli(self, tmp_path):
        visible = tmp_path / "u4.json"
        save_model(Uniform(4, 2), visible)
        out = tmp_path / "est.ndjson"
        code = cli_main([
            "estimate-kl", "--visible", str(visible), "--hidden", str(visible),
            "--eps", "0.5", "--trials", "2", "--seed", "1",
            "--budget-scale", "0.05", "--parallel", "1", "--out", str(out),
        ])
        assert code == 0
        rows = read_report(out).rows
        assert all(abs(r["estimate"]) <= 0.5 for r in rows)

    def test_error_exit_code(self, tmp_path):
        code = cli_main([
            "test", "--visible", str(tmp_path / "missing.json"),
            "--hidden", str(tmp_path / "missing.json"),
            "--tester", "coordinate-kl", "--eps", "1.0", "--trials", "1",
            "--seed", "0", "--out", str(tmp_path / "r.ndjson"),
        ])
        assert code == 2
