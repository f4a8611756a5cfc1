"""
Tests for the evade-lite command-line pipeline.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from evade_lite.cli import cli
from evade_lite.infrastructure.dataset import subsample_indices
from evade_lite.infrastructure.repositories import (
    CONCISE_SSD,
    CONVERSION_TABLE,
    MODEL,
    PREPROCESSOR,
    SHAP_BASE,
    SHAP_VALUES,
    SPLIT_MANIFEST,
    TEST,
    TRAIN,
)
from evade_lite.utils.config import load_run_config


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args], catch_exceptions=False)


def rewrite_config(path: Path, **changes) -> Path:
    """Copy of a run config with top-level keys replaced."""
    config = json.loads(path.read_text())
    config.update(changes)
    out = path.with_name(f"variant_{len(list(path.parent.glob('variant_*')))}.json")
    out.write_text(json.dumps(config))
    return out


def read_jsonl(path: Path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture
def run_dir(iris_config):
    return Path(json.loads(iris_config.read_text())["output_dir"])


@pytest.fixture
def trained(runner, iris_config, run_dir):
    assert invoke(runner, "prepare", "-c", iris_config).exit_code == 0
    assert invoke(runner, "train", "-c", iris_config).exit_code == 0
    return run_dir


class TestPrepare:
    """Test cases for the prepare command."""

    def test_writes_artifacts(self, runner, iris_config, run_dir):
        result = invoke(runner, "prepare", "-c", iris_config)
        assert result.exit_code == 0
        for name in (PREPROCESSOR, SPLIT_MANIFEST, TRAIN, TEST):
            assert (run_dir / name).is_file()
        split = json.loads((run_dir / SPLIT_MANIFEST).read_text())
        assert split["n_rows"] == 150
        assert len(split["test_indices"]) == 50

    def test_idempotent(self, runner, iris_config, run_dir):
        invoke(runner, "prepare", "-c", iris_config)
        first = (run_dir / TRAIN).read_bytes()
        invoke(runner, "prepare", "-c", iris_config)
        assert (run_dir / TRAIN).read_bytes() == first

    def test_seed_override_changes_split(self, runner, iris_config, run_dir, tmp_path):
        invoke(runner, "prepare", "-c", iris_config)
        invoke(runner, "prepare", "-c", iris_config, "--seed", 7, "-o", tmp_path / "other")
        base = json.loads((run_dir / SPLIT_MANIFEST).read_text())
        other = json.loads((tmp_path / "other" / SPLIT_MANIFEST).read_text())
        assert base["test_indices"] != other["test_indices"]

    def test_invalid_schema_hint_writes_nothing(self, runner, iris_config, run_dir):
        config = json.loads(iris_config.read_text())
        config["dataset"]["categorical"] = ["not_a_column"]
        bad = rewrite_config(iris_config, dataset=config["dataset"])
        result = invoke(runner, "prepare", "-c", bad)
        assert result.exit_code == 1
        assert not (run_dir / PREPROCESSOR).exists()

    def test_invalid_config(self, runner, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert invoke(runner, "prepare", "-c", path).exit_code == 2

    def test_unknown_setting(self, runner, iris_config):
        bad = rewrite_config(iris_config, colour="blue")
        assert invoke(runner, "prepare", "-c", bad).exit_code == 2

    def test_missing_config(self, runner, tmp_path):
        assert invoke(runner, "prepare", "-c", tmp_path / "absent.json").exit_code == 2


class TestTrainAndExplain:
    """Test cases for train, explain and analyze."""

    def test_train_before_prepare(self, runner, iris_config):
        assert invoke(runner, "train", "-c", iris_config).exit_code == 1

    def test_train_saves_model(self, runner, trained):
        assert (trained / MODEL).is_file()

    def test_explain_and_analyze(self, runner, iris_config, trained):
        assert invoke(runner, "explain", "-c", iris_config).exit_code == 0
        for name in (SHAP_VALUES, SHAP_BASE, "global_importance.csv", "beeswarm.csv"):
            assert (trained / name).is_file()
        assert len(pd.read_csv(trained / SHAP_VALUES)) == 40 * 3 * 4

        assert invoke(runner, "analyze", "-c", iris_config).exit_code == 0
        table = json.loads((trained / CONVERSION_TABLE).read_text())
        assert sorted(table) == ["0->1", "0->2", "1->0", "1->2", "2->0", "2->1"]
        assert (trained / CONCISE_SSD).is_file()

    def test_analyze_without_shap_values(self, runner, iris_config, trained):
        assert invoke(runner, "analyze", "-c", iris_config).exit_code == 1


class TestAttack:
    """Test cases for the attack command."""

    def test_targeted_campaign(self, runner, iris_config, trained):
        result = invoke(
            runner, "attack", "-c", iris_config, "--mode", "targeted", "--eps", "0.3,0.4,0.5,0.6"
        )
        assert result.exit_code == 0
        assert (trained / CONVERSION_TABLE).is_file()

        frame = pd.read_csv(trained / "efficacy_targeted.csv")
        assert len(frame) == 12
        assert set(frame["model"]) == {"logistic"}
        assert frame["epsilon"].is_monotonic_increasing
        assert (frame["evaded"] <= frame["n"]).all()

        records = read_jsonl(trained / "campaign_targeted.jsonl")
        assert len(records) == int(frame["n"].sum())
        for record in records[:20]:
            assert record["c_from"] != record["c_to"]
            assert record["distance"] <= record["epsilon"] + 1e-12
            assert all(0.0 <= v <= 1.0 for v in record["adversarial_row"])
            assert len(record["raw_adversarial_row"]) == 4

    def test_untargeted_campaign(self, runner, iris_config, trained):
        assert invoke(runner, "attack", "-c", iris_config, "--mode", "untargeted").exit_code == 0
        frame = pd.read_csv(trained / "efficacy_untargeted.csv")
        assert frame["epsilon"].tolist() == [0.3, 0.5]
        assert frame["target_class"].tolist() == ["any", "any"]

    def test_optimal_epsilon_campaign(self, runner, iris_config, trained):
        assert invoke(runner, "attack", "-c", iris_config, "--mode", "optimal-epsilon").exit_code == 0
        records = read_jsonl(trained / "campaign_optimal_epsilon.jsonl")
        assert len(records) == 2 * 50
        assert all(r["iterations"] == 6 for r in records)
        assert all(0.0 <= r["epsilon_optimal"] <= 1.0 for r in records)
        assert len(pd.read_csv(trained / "efficacy_optimal_epsilon.csv")) == 3

    def test_subsample_records_index_test_split(self, runner, iris_config, trained):
        """Records of a subsampled campaign point at rows of test.csv."""
        config = json.loads(iris_config.read_text())
        config["dataset"]["attack_subsample"] = 20
        sub = rewrite_config(iris_config, dataset=config["dataset"])
        assert invoke(runner, "attack", "-c", sub, "--eps", "0.5").exit_code == 0

        run = load_run_config(sub)
        expected = subsample_indices(50, 20, run.subsample_seed)
        test = pd.read_csv(trained / TEST)
        features = [c for c in test.columns if c != "label"]
        records = read_jsonl(trained / "campaign_targeted.jsonl")
        assert {r["sample_index"] for r in records} == set(expected)
        assert max(r["sample_index"] for r in records) >= 20
        for r in records:
            original = test.loc[r["sample_index"], features].to_numpy(dtype=float)
            assert r["c_from"] == int(test.loc[r["sample_index"], "label"])
            assert np.abs(np.asarray(r["adversarial_row"]) - original).max() <= 0.5 + 1e-9

    def test_invalid_eps_list(self, runner, iris_config, trained):
        assert invoke(runner, "attack", "-c", iris_config, "--eps", "0.3,abc").exit_code == 2

    def test_unreachable_remote(self, runner, iris_config, run_dir):
        remote = rewrite_config(
            iris_config,
            model={
                "kind": "remote",
                "remote": {"transport": "http", "target": "http://127.0.0.1:9/", "timeout": 1},
            },
        )
        assert invoke(runner, "prepare", "-c", remote).exit_code == 0
        result = invoke(runner, "attack", "-c", remote)
        assert result.exit_code == 1
        assert not (run_dir / "efficacy_targeted.csv").exists()
        assert not (run_dir / "campaign_targeted.jsonl").exists()

    def test_remote_subprocess_model(self, runner, iris_config, trained):
        """The saved model served in a child process gives the local efficacy."""
        invoke(runner, "attack", "-c", iris_config, "--eps", "0.4")
        local = pd.read_csv(trained / "efficacy_targeted.csv")

        command = [
            sys.executable, "-m", "evade_lite.infrastructure.model_server",
            "--model", str(trained / MODEL),
        ]
        remote = rewrite_config(
            iris_config,
            model={"kind": "remote", "name": "logistic", "remote": {"target": command, "timeout": 30}},
        )
        assert invoke(runner, "attack", "-c", remote, "--eps", "0.4").exit_code == 0
        served = pd.read_csv(trained / "efficacy_targeted.csv")
        assert served["evaded"].tolist() == local["evaded"].tolist()


class TestEvaluateAndReport:
    """Test cases for evaluate and report."""

    def test_evaluate_then_report(self, runner, iris_config, trained):
        assert invoke(runner, "evaluate", "-c", iris_config).exit_code == 0
        for family in ("efficacy_targeted", "efficacy_untargeted", "saturation", "accuracy"):
            assert (trained / f"{family}.csv").is_file()
        accuracy = pd.read_csv(trained / "accuracy.csv")
        assert (accuracy["acc_after"] <= accuracy["acc_before"]).all()
        saturation = pd.read_csv(trained / "saturation.csv")
        assert sorted(set(saturation["k"])) == [1, 2, 3, 4]

        assert invoke(runner, "report", "-c", iris_config).exit_code == 0
        reports = trained / "reports"
        assert (reports / "efficacy_targeted.csv").is_file()
        assert (reports / "saturation.svg").is_file()
        assert (reports / "global_importance.svg").is_file()
        assert (reports / "beeswarm.svg").is_file()

    def test_report_json_without_charts(self, runner, iris_config, trained):
        invoke(runner, "attack", "-c", iris_config)
        result = invoke(runner, "report", "-c", iris_config, "--format", "json", "--no-charts")
        assert result.exit_code == 0
        data = json.loads((trained / "reports" / "efficacy_targeted.json").read_text())
        assert len(data) == 6
        assert not list((trained / "reports").glob("*.svg"))

    def test_report_without_results(self, runner, iris_config):
        assert invoke(runner, "report", "-c", iris_config).exit_code == 1


class TestServe:
    def test_serve_stdio(self, runner):
        stdin = '{"op": "meta"}\n{"op": "predict", "instances": [[0.1, 0.2, 0.3, 0.4]]}\n'
        result = runner.invoke(cli, ["serve", "--constant-class", "2"], input=stdin)
        assert result.exit_code == 0
        replies = [json.loads(line) for line in result.stdout.splitlines() if line.startswith("{")]
        assert replies[0] == {"n_features": 4, "n_classes": 3}
        assert replies[1]["labels"] == [2]

    def test_version(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "0.1.0" in result.output


class TestShippedConfigs:
    """The example run configs validate."""

    @pytest.mark.parametrize(
        "path", sorted((Path(__file__).parent.parent / "configs").glob("*.json")), ids=lambda p: p.name
    )
    def test_config_loads(self, path):
        config = load_run_config(path)
        assert config.dataset.path.is_absolute()
        assert config.dataset.split_seed == config.seed
