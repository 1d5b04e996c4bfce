import json

import numpy as np
import pytest

from umtree.data import (Dataset, RelationDict, SyntheticSpec, generate_synthetic)
from umtree.decoder import TreeModel
from umtree.flat import FlatModel, OutputVocab
from umtree.train import evaluate_model, predict_surfaces, train_model
from umtree.vocab import Vocab


@pytest.fixture(scope="module")
def corpus():
    spec = SyntheticSpec(vocab_size=40, n_relations=2, n_train=12, n_test=4,
                         seed=2, triplets_per_sentence=((1, 0.7), (2, 0.3)))
    train, test = generate_synthetic(spec)
    vocab = Vocab.build(train)
    rels = RelationDict(spec.relation_names())
    return train, test, vocab, rels


def small_model(vocab, rels, seed=0):
    return TreeModel(vocab, rels, order="rth", emb_dim=12, hidden=12, seed=seed)


def run(corpus, out_dir=None, **kwargs):
    train, _, vocab, rels = corpus
    model = small_model(vocab, rels)
    defaults = dict(epochs=4, batch_size=6, lr=3e-3, seed=0, quiet=True)
    defaults.update(kwargs)
    result = train_model(model, train, train, out_dir=out_dir, **defaults)
    return model, result


def strip_wall(metrics):
    return [{k: v for k, v in m.items() if k != "wall_seconds"} for m in metrics]


class TestTrainLoop:
    def test_identical_seeds_identical_metrics(self, corpus):
        _, first = run(corpus)
        _, second = run(corpus)
        assert strip_wall(first.metrics) == strip_wall(second.metrics)

    def test_different_seed_differs(self, corpus):
        _, first = run(corpus)
        _, second = run(corpus, seed=1)
        assert strip_wall(first.metrics) != strip_wall(second.metrics)

    def test_loss_decreases_on_average(self, corpus):
        _, result = run(corpus, epochs=12)
        losses = [m["train_loss"] for m in result.metrics]
        assert np.mean(losses[-3:]) < np.mean(losses[:3])

    def test_metrics_file_and_checkpoints(self, corpus, tmp_path):
        _, result = run(corpus, out_dir=tmp_path)
        lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == len(result.metrics)
        entry = json.loads(lines[0])
        assert set(entry) == {"epoch", "train_loss", "dev_precision", "dev_recall",
                              "dev_f1", "wall_seconds"}
        assert (tmp_path / "last.ckpt").exists()
        assert (tmp_path / "best.ckpt").exists()

    def test_keep_all_checkpoints(self, corpus, tmp_path):
        run(corpus, out_dir=tmp_path, epochs=3, keep_all_checkpoints=True)
        for epoch in (1, 2, 3):
            assert (tmp_path / f"epoch_{epoch:03d}.ckpt").exists()

    def test_best_epoch_tracks_max_dev_f1(self, corpus):
        _, result = run(corpus, epochs=6)
        f1s = [m["dev_f1"] for m in result.metrics]
        assert result.best_f1 == max(f1s)
        assert f1s[result.best_epoch - 1] == result.best_f1

    def test_eval_every_skips_intermediate_epochs(self, corpus):
        _, result = run(corpus, epochs=4, eval_every=2)
        evaluated = [m["epoch"] for m in result.metrics if m["dev_f1"] is not None]
        assert evaluated == [2, 4]

    def test_early_stop(self, corpus, monkeypatch):
        import umtree.train as train_mod
        from umtree.evaluation import EvalReport
        monkeypatch.setattr(
            train_mod, "evaluate_model",
            lambda model, dataset, jobs=1: EvalReport(1, 1, 1, 1.0, 1.0, 0.75))
        train, _, vocab, rels = corpus
        model = small_model(vocab, rels)
        result = train_model(model, train, train, epochs=50, batch_size=6,
                             lr=3e-3, seed=0, early_stop_f1=0.5, quiet=True)
        assert len(result.metrics) == 1

    def test_cosine_schedule_runs(self, corpus):
        _, result = run(corpus, epochs=3, lr_schedule="cosine", lr_min=1e-4)
        assert len(result.metrics) == 3

    def test_unknown_schedule_rejected(self, corpus):
        with pytest.raises(ValueError, match="lr_schedule"):
            run(corpus, lr_schedule="warmup")

    def test_flat_model_excludes_overlong_targets(self, corpus):
        train, _, vocab, rels = corpus
        out_vocab = OutputVocab.build(train.sentences, rels)
        model = FlatModel(vocab, rels, out_vocab, emb_dim=12, hidden=12,
                          max_decode_len=8, seed=0)
        result = train_model(model, train, epochs=1, batch_size=6, lr=1e-3,
                             seed=0, quiet=True)
        assert result.excluded > 0


class TestPrediction:
    def test_jobs_do_not_change_results(self, corpus):
        train, test, vocab, rels = corpus
        model, _ = run(corpus)
        assert predict_surfaces(model, test, jobs=1) == \
            predict_surfaces(model, test, jobs=3)

    def test_evaluate_model_report_shape(self, corpus):
        _, test, vocab, rels = corpus
        model = small_model(vocab, rels)
        report = evaluate_model(model, test)
        assert 0.0 <= report.f1 <= 1.0
        assert report.gold == sum(len({t.surface() for t in s.triplets})
                                  for s in test)
