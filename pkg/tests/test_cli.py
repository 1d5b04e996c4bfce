import hashlib
import json
from pathlib import Path

import pytest

from umtree.cli import main
from umtree.config import (ConfigError, RunConfig, apply_file, apply_overrides,
                           load_config)


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestConfig:
    def test_file_parsing_and_types(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "# comment\n"
            "order = trh\n"
            "epochs = 7\n"
            "lr = 0.01\n"
            "truncate = true\n"
            "\n")
        cfg = load_config(cfg_file)
        assert cfg.order == "trh" and cfg.epochs == 7
        assert cfg.lr == 0.01 and cfg.truncate is True

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("no_such_key = 1\n")
        with pytest.raises(ConfigError, match="no_such_key"):
            load_config(cfg_file)

    def test_overrides_beat_file(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("epochs = 7\nseed = 3\n")
        cfg = RunConfig()
        apply_file(cfg, cfg_file)
        apply_overrides(cfg, {"epochs": "9"})
        assert cfg.epochs == 9 and cfg.seed == 3

    def test_bad_order_rejected(self):
        cfg = RunConfig(order="rrr")
        with pytest.raises(ConfigError, match="order"):
            cfg.validate()

    def test_bad_threshold_rejected(self):
        cfg = RunConfig(threshold=1.5)
        with pytest.raises(ConfigError, match="threshold"):
            cfg.validate()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> train -> predict pipeline shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--out", str(data), "--seed", "3",
                 "--synth-vocab-size", "40", "--synth-relations", "2",
                 "--synth-train", "12", "--synth-test", "5",
                 "--synth-triplet-dist", "1:0.6,2:0.4"]) == 0
    run = root / "run"
    assert main(["train", "--train-path", str(data / "train.jsonl"),
                 "--dev-path", str(data / "train.jsonl"),
                 "--relations-path", str(data / "relations.json"),
                 "--out", str(run), "--epochs", "3", "--batch-size", "6",
                 "--embedding-dim", "12", "--hidden-dim", "12",
                 "--lr", "0.003", "--seed", "0"]) == 0
    assert main(["predict", "--test-path", str(data / "test.jsonl"),
                 "--checkpoint-path", str(run / "best.ckpt"),
                 "--vocab-path", str(run / "vocab.tsv"),
                 "--relations-path", str(data / "relations.json"),
                 "--embedding-dim", "12", "--hidden-dim", "12",
                 "--out", str(run)]) == 0
    return data, run


class TestPipeline:
    def test_synth_artifacts(self, workspace):
        data, _ = workspace
        assert (data / "train.jsonl").exists()
        assert (data / "test.jsonl").exists()
        assert json.loads((data / "relations.json").read_text()) == ["rel_0", "rel_1"]

    def test_train_artifacts(self, workspace):
        _, run = workspace
        for name in ("metrics.jsonl", "best.ckpt", "last.ckpt", "vocab.tsv",
                     "config_used.txt", "training.png"):
            assert (run / name).exists(), name
        entries = [json.loads(l) for l in (run / "metrics.jsonl").read_text().splitlines()]
        assert [e["epoch"] for e in entries] == [1, 2, 3]

    def test_predictions_schema(self, workspace):
        data, run = workspace
        lines = (run / "predictions.jsonl").read_text().splitlines()
        assert len(lines) == 5
        for line in lines:
            obj = json.loads(line)
            assert set(obj) == {"text", "triplets"}
            for t in obj["triplets"]:
                assert set(t) == {"head", "relation", "tail"}
                assert set(t["head"]) == {"begin", "end", "text"}

    def test_evaluate_with_predictions_file(self, workspace, tmp_path, capsys):
        data, run = workspace
        out = tmp_path / "eval"
        assert main(["evaluate", "--test-path", str(data / "test.jsonl"),
                     "--predictions-path", str(run / "predictions.jsonl"),
                     "--out", str(out)]) == 0
        assert (out / "eval.csv").exists()
        assert (out / "eval.json").exists()
        assert (out / "eval.png").exists()
        header = (out / "eval.csv").read_text().splitlines()[0]
        assert header == "bucket,predicted,gold,correct,precision,recall,f1"
        assert "test:" in capsys.readouterr().out

    def test_evaluate_without_figures(self, workspace, tmp_path):
        data, run = workspace
        out = tmp_path / "nofig"
        assert main(["evaluate", "--test-path", str(data / "test.jsonl"),
                     "--predictions-path", str(run / "predictions.jsonl"),
                     "--figures", "false", "--out", str(out)]) == 0
        assert not (out / "eval.png").exists()

    def test_analyze_artifacts(self, workspace, tmp_path):
        data, run = workspace
        out = tmp_path / "analysis"
        assert main(["analyze", "--train-path", str(data / "train.jsonl"),
                     "--test-path", str(data / "test.jsonl"),
                     "--predictions-path", str(run / "predictions.jsonl"),
                     "--out", str(out)]) == 0
        for name in ("buckets.csv", "buckets.json", "buckets.png",
                     "reoccurrence.csv", "reoccurrence.json", "reoccurrence.png"):
            assert (out / name).exists(), name

    def test_ab_split_artifacts(self, workspace, tmp_path):
        data, _ = workspace
        out = tmp_path / "ab"
        assert main(["ab-split", "--train-path", str(data / "train.jsonl"),
                     "--test-path", str(data / "test.jsonl"),
                     "--out", str(out), "--seed", "1"]) == 0
        counts = json.loads((out / "ab_counts.json").read_text())
        assert set(counts) == {"train_subset", "test_a", "test_b", "dropped"}
        for name in ("ab_train.jsonl", "ab_test_a.jsonl", "ab_test_b.jsonl"):
            assert (out / name).exists()

    def test_inputs_never_mutated(self, workspace, tmp_path):
        data, run = workspace
        before = {p: sha(p) for p in data.glob("*.jsonl")}
        main(["evaluate", "--test-path", str(data / "test.jsonl"),
              "--predictions-path", str(run / "predictions.jsonl"),
              "--out", str(tmp_path / "again")])
        after = {p: sha(p) for p in data.glob("*.jsonl")}
        assert before == after

    def test_deterministic_retrain_identical_metrics(self, workspace, tmp_path):
        data, run = workspace
        rerun = tmp_path / "rerun"
        assert main(["train", "--train-path", str(data / "train.jsonl"),
                     "--dev-path", str(data / "train.jsonl"),
                     "--relations-path", str(data / "relations.json"),
                     "--out", str(rerun), "--epochs", "3", "--batch-size", "6",
                     "--embedding-dim", "12", "--hidden-dim", "12",
                     "--lr", "0.003", "--seed", "0"]) == 0

        def stripped(path):
            rows = [json.loads(l) for l in path.read_text().splitlines()]
            return [{k: v for k, v in r.items() if k != "wall_seconds"}
                    for r in rows]

        assert stripped(run / "metrics.jsonl") == stripped(rerun / "metrics.jsonl")


class TestFlatPipeline:
    def test_flat_train_then_predict_roundtrip(self, tmp_path):
        data = tmp_path / "data"
        assert main(["synth", "--out", str(data), "--seed", "9",
                     "--synth-vocab-size", "40", "--synth-relations", "2",
                     "--synth-train", "8", "--synth-test", "3",
                     "--synth-triplet-dist", "1:1.0"]) == 0
        run = tmp_path / "flatrun"
        assert main(["train", "--model", "flat",
                     "--train-path", str(data / "train.jsonl"),
                     "--relations-path", str(data / "relations.json"),
                     "--out", str(run), "--epochs", "2", "--batch-size", "4",
                     "--embedding-dim", "10", "--hidden-dim", "10",
                     "--figures", "false", "--seed", "0"]) == 0
        assert (run / "flat_vocab.txt").exists()
        assert main(["predict", "--model", "flat",
                     "--test-path", str(data / "test.jsonl"),
                     "--checkpoint-path", str(run / "best.ckpt"),
                     "--vocab-path", str(run / "vocab.tsv"),
                     "--relations-path", str(data / "relations.json"),
                     "--embedding-dim", "10", "--hidden-dim", "10",
                     "--out", str(run)]) == 0
        assert (run / "predictions.jsonl").exists()


@pytest.mark.slow
class TestOverfitRoundTrip:
    def test_train_predict_evaluate_f1(self, tmp_path):
        data = tmp_path / "data"
        assert main(["synth", "--out", str(data), "--seed", "11",
                     "--synth-vocab-size", "60", "--synth-relations", "3",
                     "--synth-train", "10", "--synth-test", "5",
                     "--synth-triplet-dist", "1:0.6,2:0.4"]) == 0
        run = tmp_path / "run"
        assert main(["train", "--train-path", str(data / "train.jsonl"),
                     "--dev-path", str(data / "train.jsonl"),
                     "--relations-path", str(data / "relations.json"),
                     "--out", str(run), "--epochs", "200", "--batch-size", "8",
                     "--embedding-dim", "32", "--hidden-dim", "32",
                     "--lr", "0.006", "--lr-schedule", "cosine",
                     "--lr-min", "0.0005", "--eval-every", "5",
                     "--early-stop-f1", "0.995", "--figures", "false",
                     "--seed", "0"]) == 0
        metrics = [json.loads(l)
                   for l in (run / "metrics.jsonl").read_text().splitlines()]
        assert metrics[-1]["dev_f1"] >= 0.99
        assert main(["predict", "--test-path", str(data / "train.jsonl"),
                     "--checkpoint-path", str(run / "best.ckpt"),
                     "--vocab-path", str(run / "vocab.tsv"),
                     "--relations-path", str(data / "relations.json"),
                     "--embedding-dim", "32", "--hidden-dim", "32",
                     "--out", str(run)]) == 0
        out = tmp_path / "eval"
        assert main(["evaluate", "--test-path", str(data / "train.jsonl"),
                     "--predictions-path", str(run / "predictions.jsonl"),
                     "--figures", "false", "--out", str(out)]) == 0
        report = json.loads((out / "eval.json").read_text())
        assert report["f1"] >= 0.99


class TestErrors:
    def test_missing_path_one_line_error(self, capsys):
        assert main(["train", "--train-path", "/nonexistent/x.jsonl"]) == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        assert err[0].startswith("ERROR ConfigError:")

    def test_bad_config_value_reported(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("epochs = many\n")
        assert main(["grad-check", "--config", str(cfg)]) == 1
        assert "ERROR" in capsys.readouterr().err

    def test_flat_model_requires_flat_vocab(self, workspace, capsys, tmp_path):
        data, run = workspace
        assert main(["predict", "--model", "flat",
                     "--test-path", str(data / "test.jsonl"),
                     "--checkpoint-path", str(run / "best.ckpt"),
                     "--vocab-path", str(run / "vocab.tsv"),
                     "--relations-path", str(data / "relations.json"),
                     "--out", str(tmp_path / "flatout")]) == 1
        assert "ERROR" in capsys.readouterr().err
