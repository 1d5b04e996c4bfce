import numpy as np
import pytest

from umtree.data import SyntheticSpec, generate_synthetic, measure_overlap
from umtree.decoder import DecodeOrder
from umtree.evaluation import write_order_csv
from umtree.experiments import (BiasResult, BiasTrial, TrainSettings,
                                default_bias_spec, exposure_bias_trial,
                                order_sweep_experiment)


def test_bias_spec_yields_fully_novel_test_set():
    spec = default_bias_spec(seed=3)
    train, test = generate_synthetic(spec)
    assert measure_overlap(train, test) == 0.0
    assert all(s.triplets for s in test)


def test_bias_result_aggregation():
    result = BiasResult(trials=[BiasTrial(0, 0.8, 0.2), BiasTrial(1, 0.6, 0.4)])
    assert result.mean_tree_recall() == pytest.approx(0.7)
    assert result.mean_flat_recall() == pytest.approx(0.3)
    assert result.recall_gap() == pytest.approx(0.4)


@pytest.mark.slow
def test_exposure_bias_trial_smoke():
    settings = TrainSettings(epochs=3, batch_size=8, lr=3e-3, emb_dim=12,
                             hidden=12)
    spec = SyntheticSpec(vocab_size=60, n_relations=3, n_train=30, n_test=8,
                         triplets_per_sentence=((1, 0.5), (2, 0.5)),
                         combination_skew=1.0, overlap=0.0, seed=0)
    trial = exposure_bias_trial(0, settings, spec)
    assert 0.0 <= trial.tree_recall <= 1.0
    assert 0.0 <= trial.flat_recall <= 1.0


@pytest.mark.slow
def test_order_sweep_experiment_six_rows(tmp_path):
    spec = SyntheticSpec(vocab_size=50, n_relations=2, n_train=10, n_test=4,
                         seed=1, triplets_per_sentence=((1, 1.0),))
    train, test = generate_synthetic(spec)
    settings = TrainSettings(epochs=2, batch_size=5, lr=3e-3, emb_dim=10,
                             hidden=10)
    rows = order_sweep_experiment(train, test, settings)
    assert [r.order for r in rows] == ["hrt", "htr", "rht", "rth", "thr", "trh"]
    assert all(r.error is None for r in rows)
    path = tmp_path / "orders.csv"
    write_order_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "order,precision,recall,f1,error"
    assert len(lines) == 7
