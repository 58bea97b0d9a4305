"""
Integration Test: Command-Line Flows

train -> sample -> eval on a tiny synthetic table, plus the enfe and verify
commands and the usage-error exit status.
"""

import json

import pandas as pd
import pytest


@pytest.fixture
def trained_run(run_cli, write_config, synthetic_document, tmp_path):
    """A finished `radd train` run; returns its output directory."""
    config = write_config("train.json", synthetic_document)
    status, _ = run_cli(["train", "--config", str(config)])
    assert status == 0
    return tmp_path / "run"


class TestTrainCommand:
    """radd train"""

    def test_train_writes_artifacts(self, run_cli, write_config, synthetic_document, tmp_path):
        # Arrange
        config = write_config("train.json", synthetic_document)

        # Act
        status, out = run_cli(["train", "--config", str(config), "--seed", "2"])

        # Assert
        assert status == 0
        run = tmp_path / "run"
        for name in ("config.json", "model.json", "model_ema.json", "metrics.csv"):
            assert (run / name).exists(), name
        summary = json.loads(out)
        assert summary["steps"] == 150
        assert summary["expected_exact_loss"] >= summary["entropy_p0"] - 1e-9
        assert json.loads((run / "config.json").read_text())["train"]["seed"] == 2

        metrics = pd.read_csv(run / "metrics.csv")
        assert metrics["step"].tolist() == [1, 50, 100, 150]
        assert metrics["loss_exact_heldout"].notna().sum() == 3

    def test_train_without_data_is_a_usage_error(self, run_cli, write_config, tmp_path):
        # Arrange
        config = write_config("empty.json", {"out": str(tmp_path / "x")})

        # Act
        status, _ = run_cli(["train", "--config", str(config)])

        # Assert
        assert status == 2


class TestSampleCommand:
    """radd sample"""

    def _sample(self, run_cli, write_config, synthetic_document, run_dir, cache):
        document = dict(synthetic_document)
        document["model"] = {"backend": "tabular", "checkpoint": str(run_dir / "model.json")}
        document["out"] = str(run_dir / f"samples_{cache}")
        config = write_config(f"sample_{cache}.json", document)
        status, out = run_cli(["sample", "--config", str(config), "--cache", cache])
        assert status == 0
        return run_dir / f"samples_{cache}", json.loads(out)

    def test_cache_modes_write_identical_samples(self, run_cli, write_config, synthetic_document, trained_run):
        # Act
        on_dir, on = self._sample(run_cli, write_config, synthetic_document, trained_run, "on")
        off_dir, off = self._sample(run_cli, write_config, synthetic_document, trained_run, "off")

        # Assert
        assert (on_dir / "samples.jsonl").read_text() == (off_dir / "samples.jsonl").read_text()
        assert on["nfe"]["mean"] <= off["nfe"]["mean"]
        lines = (on_dir / "samples.jsonl").read_text().splitlines()
        assert len(lines) == 24
        assert json.loads(lines[0]).keys() == {"index", "tokens", "forced_fill"}

        nfe = pd.read_csv(on_dir / "nfe.csv")
        assert nfe["n"].iloc[0] == 8
        assert nfe["enfe_analytic"].iloc[0] == pytest.approx(8 * (1 - (7 / 8) ** 3))

    def test_ao_sampling_with_prompt(self, run_cli, write_config, synthetic_document, trained_run):
        # Arrange
        document = dict(synthetic_document)
        document["model"] = {"backend": "tabular", "checkpoint": str(trained_run / "model.json")}
        document["sampling"] = {"method": "ao", "order": "forward", "trajectories": 5, "prompt": [[0, 2]]}
        document["out"] = str(trained_run / "ao")
        config = write_config("ao.json", document)

        # Act
        status, out = run_cli(["sample", "--config", str(config)])

        # Assert
        assert status == 0
        assert json.loads(out)["nfe"]["mean"] == 2.0
        for line in (trained_run / "ao" / "samples.jsonl").read_text().splitlines():
            assert json.loads(line)["tokens"][0] == 2

    def test_checkpoint_mismatch_is_a_usage_error(self, run_cli, write_config, synthetic_document, trained_run):
        # Arrange
        document = dict(synthetic_document)
        document["data"] = {"synthetic": {"kind": "uniform", "n_tokens": 4, "d": 3}}
        document["model"] = {"backend": "tabular", "checkpoint": str(trained_run / "model.json")}
        config = write_config("mismatch.json", document)

        # Act
        status, _ = run_cli(["sample", "--config", str(config)])

        # Assert
        assert status == 2


class TestEvalCommand:
    """radd eval"""

    def test_eval_reports_perplexity_and_tv(self, run_cli, write_config, synthetic_document, trained_run, tmp_path):
        # Arrange
        document = dict(synthetic_document)
        document["model"] = {"backend": "tabular", "checkpoint": str(trained_run / "model.json")}
        document["eval"] = {"loss": "ao", "estimator": "exact", "max_examples": 32, "seed": 1,
                            "tv_trials": 500, "results_csv": str(tmp_path / "results.csv")}
        document["out"] = str(tmp_path / "eval")
        config = write_config("eval.json", document)

        # Act
        status, out = run_cli(["eval", "--config", str(config)])

        # Assert
        assert status == 0
        report = json.loads(out)
        assert report["n_examples"] == 32
        assert 1.0 < report["perplexity"] < 3.0
        assert 0.0 <= report["tv_distance"] <= 1.0
        assert report["nfe_summary"]["mean"] > 0
        assert (tmp_path / "eval" / "eval.json").exists()
        assert len(pd.read_csv(tmp_path / "results.csv")) == 1

    def test_untrained_uniform_model(self, run_cli, write_config, synthetic_document, tmp_path):
        # Arrange
        document = dict(synthetic_document)
        document["model"] = {"backend": "uniform"}
        document["out"] = str(tmp_path / "uniform")
        config = write_config("uniform.json", document)

        # Act
        status, out = run_cli(["eval", "--config", str(config), "--loss", "ldce"])

        # Assert
        assert status == 0
        assert json.loads(out)["perplexity"] == pytest.approx(3.0, rel=1e-10)


class TestEnfeCommand:
    """radd enfe"""

    def test_enfe_table(self, run_cli, tmp_path):
        # Act
        status, _ = run_cli(["enfe", "--steps", "2,8,32", "--lengths", "4,16", "--trajectories", "0",
                             "--out", str(tmp_path / "enfe")])

        # Assert
        assert status == 0
        table = pd.read_csv(tmp_path / "enfe" / "enfe.csv")
        assert len(table) == 6
        for row in table.itertuples():
            assert row.enfe_analytic == pytest.approx(row.n * (1 - (1 - 1 / row.n) ** row.l), rel=1e-12)

    def test_enfe_rejects_ao(self, run_cli, write_config, tmp_path):
        # Arrange
        config = write_config("enfe.json", {"enfe": {"method": "ao"}, "out": str(tmp_path / "e")})

        # Act
        status, _ = run_cli(["enfe", "--config", str(config)])

        # Assert
        assert status == 2


class TestVerifyCommand:
    """radd verify"""

    def test_selected_checks_as_json(self, run_cli, tmp_path):
        # Act
        status, out = run_cli(["verify", "--only", "schedule_round_trip", "--only", "chapman_kolmogorov",
                               "--json", "--out", str(tmp_path / "verify")])

        # Assert
        assert status == 0
        report = json.loads(out)
        assert [check["name"] for check in report["checks"]] == ["schedule_round_trip", "chapman_kolmogorov"]
        assert all(check["passed"] for check in report["checks"])
        assert (tmp_path / "verify" / "verify.json").exists()

    def test_perturbed_score_fails(self, run_cli):
        # Act
        status, out = run_cli(["verify", "--only", "score_factorization", "--perturb-score-scale", "1e-6"])

        # Assert
        assert status == 1
        assert out.startswith("FAIL")

    def test_unknown_check_is_a_usage_error(self, run_cli):
        # Act
        status, _ = run_cli(["verify", "--only", "no_such_check"])

        # Assert
        assert status == 2


class TestUsageErrors:
    """Exit status 2 for bad input"""

    def test_invalid_config_value(self, run_cli, write_config):
        config = write_config("bad.json", {"train": {"lr": -1}})

        status, _ = run_cli(["train", "--config", str(config)])

        assert status == 2

    def test_missing_config_file(self, run_cli, tmp_path):
        status, _ = run_cli(["eval", "--config", str(tmp_path / "nope.json")])

        assert status == 2

    def test_bad_override(self, run_cli, tmp_path):
        status, _ = run_cli(["enfe", "--set", "enfe.steps", "--out", str(tmp_path / "e")])

        assert status == 2
