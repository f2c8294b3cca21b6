"""End-to-end runs of the shipped configs through the command line."""

import csv
import json
from pathlib import Path

import pytest

import main
from main import cli
from src import reporters

CONFIGS = Path(__file__).parent.parent / "configs"

pytestmark = pytest.mark.slow


@pytest.fixture(autouse=True)
def no_history(monkeypatch):
    monkeypatch.setattr(main, "RUNS_DATABASE", None)
    monkeypatch.setattr(reporters.REPORTERS[1], "db_path", None)


def run_pipeline(config: Path, root: Path) -> Path:
    """synth -> features -> train -> tune -> eval; returns the eval directory."""
    c = str(config)
    data, feats, model, out = root / "data", root / "feats", root / "model", root / "eval"
    assert cli(["synth", "--config", c, "--out", str(data)]) == 0
    assert cli(["features", "--config", c, "--manifest", str(data / "manifest.json"), "--out", str(feats)]) == 0
    assert cli(["train", "--config", c, "--features", str(feats), "--out", str(model)]) == 0
    assert cli(["tune", "--config", c, "--checkpoint", str(model / "model.wmck"),
                "--clean", str(feats), "--out", str(model)]) == 0
    assert cli(["eval", "--checkpoint", str(model / "model.wmck"),
                "--threshold-file", str(model / "threshold.json"),
                "--test", str(feats), "--out", str(out)]) == 0
    return out


def read_metrics(out: Path) -> dict[tuple[str, str], float]:
    with open(out / "metrics.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))[1:]
    return {(metric, name): float(value) for metric, name, value in rows}


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    return root, run_pipeline(CONFIGS / "desk.json", root)


class TestDeskScale:
    def test_auc_and_recall(self, desk_run):
        _, out = desk_run
        metrics = read_metrics(out)
        assert metrics[("auc", "deep-mil")] >= 0.95
        assert metrics[("recall_at_fpr", "deep-mil")] >= 0.5
        assert metrics[("fpr", "deep-mil")] <= 0.01

    def test_beats_energy_baseline(self, desk_run):
        root, out = desk_run
        assert cli(["baseline", "energy", "--config", str(CONFIGS / "desk.json"), "--normalize",
                    "--manifest", str(root / "data" / "manifest.json"), "--out", str(root / "energy")]) == 0
        energy = read_metrics(root / "energy")
        deep = read_metrics(out)
        assert deep[("recall_at_fpr", "deep-mil")] > energy[("recall_at_fpr", "energy-norm")]


class TestNovelCorruptions:
    def test_held_out_kinds_flagged_without_false_positives(self, tmp_path):
        out = run_pipeline(CONFIGS / "novel.json", tmp_path)
        metrics = read_metrics(out)
        assert metrics[("kind_recall", "HalfScreen")] >= 0.8
        assert metrics[("fp", "deep-mil")] == 0
        assert metrics[("fp", "deep-mil")] + metrics[("tn", "deep-mil")] >= 200


class TestDeterminism:
    def test_identical_desk_runs_are_byte_identical(self, desk_run, tmp_path):
        root, first = desk_run
        second = run_pipeline(CONFIGS / "desk.json", tmp_path)
        assert (root / "model" / "model.wmck").read_bytes() == (tmp_path / "model" / "model.wmck").read_bytes()
        assert (root / "feats" / "scaler.json").read_bytes() == (tmp_path / "feats" / "scaler.json").read_bytes()
        for name in ("metrics.csv", "roc.csv", "per_kind.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        thresholds = [json.loads((r / "model" / "threshold.json").read_text()) for r in (root, tmp_path)]
        assert thresholds[0]["threshold"] == thresholds[1]["threshold"]
