"""End-to-end CLI runs on a small synthetic dataset."""

import json

import pytest

from dc2b import cli


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, ml100k_style_dir):
    """prepare -> train-embeddings once; replay-family tests reuse the artifacts."""
    root = tmp_path_factory.mktemp("pipeline")
    prepared = root / "prepared"
    trained = root / "trained"
    assert run([
        "prepare", "--dataset", "ml100k", "--data-dir", str(ml100k_style_dir),
        "--threshold", "3", "--seed", "0", "--out", str(prepared),
    ]) == 0
    assert run([
        "train-embeddings", "--prepared", str(prepared), "--dim", "4",
        "--epochs", "40", "--seed", "0", "--out", str(trained),
    ]) == 0
    return prepared, trained / "embeddings.tsv"


class TestPrepare:
    def test_writes_expected_artifacts(self, pipeline):
        prepared, _ = pipeline
        for name in ("interactions.csv", "categories.json", "split.json", "manifest.json"):
            assert (prepared / name).is_file()

    def test_split_partitions_users(self, pipeline):
        prepared, _ = pipeline
        doc = json.loads((prepared / "split.json").read_text())
        train, test = set(doc["train_users"]), set(doc["test_users"])
        assert train and test and not train & test

    def test_manifest_records_inputs_and_config(self, pipeline, ml100k_style_dir):
        prepared, _ = pipeline
        manifest = json.loads((prepared / "manifest.json").read_text())
        assert manifest["command"] == "prepare"
        assert manifest["config"]["threshold"] == 3
        hashes = manifest["input_hashes"]
        assert any(p.endswith("u.data") for p in hashes)
        assert all(len(h) == 64 for h in hashes.values())

    def test_missing_data_dir_is_usage_error(self, tmp_path):
        code = run([
            "prepare", "--dataset", "ml100k", "--data-dir", str(tmp_path / "nope"),
            "--out", str(tmp_path / "out"),
        ])
        assert code == cli.USAGE_EXIT

    def test_failed_run_leaves_no_partial_outputs(self, ml100k_style_dir, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("disk full")

        monkeypatch.setattr(cli, "write_manifest", boom)
        out = tmp_path / "out"
        code = run([
            "prepare", "--dataset", "ml100k", "--data-dir", str(ml100k_style_dir),
            "--out", str(out),
        ])
        assert code == cli.FAILURE_EXIT
        assert not any(out.iterdir())


class TestConfigFile:
    def test_flag_overrides_config_file(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        cfg = tmp_path / "run.cfg"
        cfg.write_text("slate-size=3\ntrials=2\n")
        out = tmp_path / "out"
        assert run([
            "replay", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--policy", "log_rank", "--config", str(cfg),
            "--slate-size", "4", "--out", str(out),
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["slate-size"] == 4  # flag wins
        assert manifest["config"]["trials"] == 2      # config file wins over default

    def test_unknown_config_key_rejected(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("slate_width=3\n")
        code = run([
            "replay", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--config", str(cfg), "--out", str(tmp_path / "out"),
        ])
        assert code == cli.USAGE_EXIT

    def test_malformed_line_reports_line_number(self, pipeline, tmp_path, capsys):
        prepared, embeddings = pipeline
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("trials=2\nnot a pair\n")
        code = run([
            "replay", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--config", str(cfg), "--out", str(tmp_path / "out"),
        ])
        assert code == cli.USAGE_EXIT
        assert ":2:" in capsys.readouterr().err


class TestValidation:
    def test_out_of_range_epsilon_is_usage_error(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        code = run([
            "replay", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--policy", "eps_greedy", "--epsilon", "1.5",
            "--out", str(tmp_path / "out"),
        ])
        assert code == cli.USAGE_EXIT

    def test_missing_prepared_is_usage_error(self, tmp_path):
        code = run([
            "replay", "--embeddings", str(tmp_path / "e.tsv"),
            "--out", str(tmp_path / "out"),
        ])
        assert code == cli.USAGE_EXIT


class TestReplayAndCompare:
    def test_replay_metrics_csv_shape(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        out = tmp_path / "out"
        assert run([
            "replay", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--policy", "mmr", "--slate-size", "4", "--trials", "2",
            "--out", str(out),
        ]) == 0
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "policy,prec@10,prec@30,prec@50,diversity,f_measure"
        row = lines[1].split(",")
        assert row[0] == "mmr"
        for v in row[1:]:
            assert 0.0 <= float(v) <= 1.0

    def test_compare_lists_all_policies(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        out = tmp_path / "out"
        assert run([
            "compare", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--slate-size", "4", "--trials", "2", "--seed", "7",
            "--out", str(out),
        ]) == 0
        lines = (out / "compare.csv").read_text().strip().splitlines()
        assert [ln.split(",")[0] for ln in lines[1:]] == [
            "dc2b", "log_rank", "mmr", "eps_greedy", "dpp_map",
        ]

    def test_compare_runs_are_byte_identical(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run([
                "compare", "--prepared", str(prepared), "--embeddings", str(embeddings),
                "--slate-size", "4", "--trials", "2", "--seed", "13",
                "--out", str(out),
            ]) == 0
            blobs.append((out / "compare.csv").read_bytes())
        assert blobs[0] == blobs[1]


class TestSweep:
    def test_alpha_sweep_rows(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        out = tmp_path / "out"
        assert run([
            "sweep", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--parameter", "alpha", "--values", "1,3", "--slate-size", "4",
            "--trials", "2", "--out", str(out),
        ]) == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "value,prec@50,diversity,f_measure"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["1.0", "3.0"]

    def test_empty_values_is_usage_error(self, pipeline, tmp_path):
        prepared, embeddings = pipeline
        code = run([
            "sweep", "--prepared", str(prepared), "--embeddings", str(embeddings),
            "--parameter", "alpha", "--values", "", "--out", str(tmp_path / "out"),
        ])
        assert code == cli.USAGE_EXIT


class TestRegret:
    def test_oracle_curve_is_all_zero(self, tmp_path):
        out = tmp_path / "out"
        assert run([
            "regret", "--policy", "oracle", "--trials", "10", "--episodes", "1",
            "--n-items", "8", "--dim", "3", "--slate-size", "3",
            "--out", str(out),
        ]) == 0
        lines = (out / "regret.csv").read_text().strip().splitlines()
        assert lines[0] == "trial,cumulative_regret"
        assert len(lines) == 11
        for ln in lines[1:]:
            assert float(ln.split(",")[1]) == 0.0

    def test_random_curve_is_positive_and_increasing(self, tmp_path):
        out = tmp_path / "out"
        assert run([
            "regret", "--policy", "random", "--trials", "30", "--episodes", "2",
            "--n-items", "8", "--dim", "3", "--slate-size", "3",
            "--out", str(out),
        ]) == 0
        lines = (out / "regret.csv").read_text().strip().splitlines()
        vals = [float(ln.split(",")[1]) for ln in lines[1:]]
        assert vals[-1] > 0.0
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_large_catalog_requires_approx_flag(self, tmp_path):
        args = [
            "regret", "--policy", "oracle", "--trials", "3", "--episodes", "1",
            "--n-items", "20", "--dim", "3", "--slate-size", "3",
            "--out", str(tmp_path / "out"),
        ]
        assert run(args) == cli.USAGE_EXIT
        assert run(args + ["--approx-oracle"]) == 0
