"""Exact-match triplet F1 plus bucketed analyses of where scores come from.

Matching is on (head surface, relation, tail surface); both sides are
deduplicated per sentence before counting, and precision is defined as 0
when nothing was predicted.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Sentence
from .decoder import ALL_ORDERS, DecodeOrder

log = logging.getLogger(__name__)

Surface = tuple[str, str, str]

CSV_COLUMNS = ["bucket", "predicted", "gold", "correct", "precision", "recall", "f1"]


class EvalError(ValueError):
    pass


@dataclass
class EvalReport:
    predicted: int
    gold: int
    correct: int
    precision: float
    recall: float
    f1: float
    buckets: dict[str, "EvalReport"] = field(default_factory=dict)

    def to_obj(self) -> dict:
        obj = {"predicted": self.predicted, "gold": self.gold,
               "correct": self.correct, "precision": self.precision,
               "recall": self.recall, "f1": self.f1}
        if self.buckets:
            obj["buckets"] = {k: b.to_obj() for k, b in self.buckets.items()}
        return obj


def _report(predicted: int, gold: int, correct: int) -> EvalReport:
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return EvalReport(predicted, gold, correct, p, r, f1)


def gold_surfaces(sentence: Sentence) -> set[Surface]:
    return {t.surface() for t in sentence.triplets}


def _as_sets(items: Sequence) -> list[set[Surface]]:
    return [set(x) for x in items]


def triplet_f1(predictions: Sequence[set[Surface]],
               golds: Sequence[set[Surface]]) -> EvalReport:
    """Micro-averaged exact-match F1 over aligned sentences."""
    if len(predictions) != len(golds):
        raise EvalError(
            f"misaligned evaluation: {len(predictions)} predicted sentences "
            f"vs {len(golds)} gold sentences")
    preds = _as_sets(predictions)
    gold = _as_sets(golds)
    n_pred = sum(len(p) for p in preds)
    n_gold = sum(len(g) for g in gold)
    n_correct = sum(len(p & g) for p, g in zip(preds, gold))
    return _report(n_pred, n_gold, n_correct)


def bucket_by_triplet_count(dataset: Dataset,
                            predictions: Sequence[set[Surface]]) -> EvalReport:
    """Per-bucket micro-F1 for sentences holding 1, 2, 3, 4 or >4 gold triplets.

    Empty buckets are absent from the result rather than reported as zeros.
    """
    if len(predictions) != len(dataset.sentences):
        raise EvalError("predictions do not align with the dataset")
    labels = ["1", "2", "3", "4", ">4"]
    grouped: dict[str, tuple[list, list]] = {k: ([], []) for k in labels}
    for sentence, pred in zip(dataset, predictions):
        count = len(gold_surfaces(sentence))
        if count == 0:
            continue
        label = str(count) if count <= 4 else ">4"
        grouped[label][0].append(pred)
        grouped[label][1].append(gold_surfaces(sentence))
    overall = triplet_f1(predictions, [gold_surfaces(s) for s in dataset])
    overall.buckets = {
        label: triplet_f1(p, g)
        for label, (p, g) in grouped.items() if g
    }
    return overall


def train_frequencies(train: Dataset) -> Counter:
    """How often each gold surface occurs across training sentences."""
    freqs: Counter = Counter()
    for sentence in train:
        freqs.update(gold_surfaces(sentence))
    return freqs


def reoccurrence_buckets(train: Dataset, test: Dataset,
                         predictions: Sequence[set[Surface]],
                         max_threshold: int = 10) -> EvalReport:
    """Cumulative buckets: bucket k scores only triplets whose training-set
    frequency is strictly below k, for k = 1..max_threshold."""
    if len(predictions) != len(test.sentences):
        raise EvalError("predictions do not align with the test dataset")
    freqs = train_frequencies(train)
    golds = [gold_surfaces(s) for s in test]
    preds = _as_sets(predictions)
    overall = triplet_f1(preds, golds)
    for k in range(1, max_threshold + 1):
        kept_p = [{t for t in p if freqs[t] < k} for p in preds]
        kept_g = [{t for t in g if freqs[t] < k} for g in golds]
        overall.buckets[f"<{k}"] = triplet_f1(kept_p, kept_g)
    return overall


@dataclass
class ABSplit:
    train_subset: Dataset
    test_a: Dataset
    test_b: Dataset
    dropped: int


def ab_split(train: Dataset, test: Dataset, subset_fraction: float = 0.6,
             seed: int = 0) -> ABSplit:
    """Seeded split: sample a training subset by sentence, then send each test
    sentence to A iff all its triplets occur in the subset, to B iff none do;
    mixed sentences are dropped and counted."""
    if not train.sentences or not test.sentences:
        raise EvalError("ab_split requires nonempty train and test sets")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(train.sentences))
    keep = max(1, int(round(subset_fraction * len(train.sentences))))
    subset = Dataset([train.sentences[i] for i in sorted(idx[:keep])])
    seen: set[Surface] = set()
    for sentence in subset:
        seen |= gold_surfaces(sentence)

    a_sents, b_sents, dropped = [], [], 0
    for sentence in test:
        surfaces = gold_surfaces(sentence)
        if not surfaces:
            dropped += 1
            continue
        hits = len(surfaces & seen)
        if hits == len(surfaces):
            a_sents.append(sentence)
        elif hits == 0:
            b_sents.append(sentence)
        else:
            dropped += 1
    if not a_sents or not b_sents:
        log.warning("degenerate AB split: A=%d, B=%d, dropped=%d",
                    len(a_sents), len(b_sents), dropped)
    return ABSplit(subset, Dataset(a_sents), Dataset(b_sents), dropped)


@dataclass
class OrderRow:
    order: str
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    error: str | None = None


def order_sweep(run_order: Callable[[DecodeOrder], EvalReport],
                orders: Sequence[DecodeOrder] = ALL_ORDERS) -> list[OrderRow]:
    """Train/evaluate one model per decoding order; a single order's failure is
    recorded and the sweep continues."""
    rows = []
    for order in orders:
        try:
            report = run_order(order)
            rows.append(OrderRow(order.key, report.precision, report.recall,
                                 report.f1))
        except Exception as err:  # noqa: BLE001 - sweep must survive one bad order
            log.error("order %s failed: %s", order.key, err)
            rows.append(OrderRow(order.key, error=f"{type(err).__name__}: {err}"))
    return rows


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def report_rows(report: EvalReport) -> list[dict]:
    rows = [{"bucket": "all", "predicted": report.predicted, "gold": report.gold,
             "correct": report.correct, "precision": report.precision,
             "recall": report.recall, "f1": report.f1}]
    for label, sub in report.buckets.items():
        rows.append({"bucket": label, "predicted": sub.predicted, "gold": sub.gold,
                     "correct": sub.correct, "precision": sub.precision,
                     "recall": sub.recall, "f1": sub.f1})
    return rows


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in report_rows(report):
            writer.writerow(row)


def write_report_json(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_obj(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def write_order_csv(rows: list[OrderRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["order", "precision", "recall", "f1", "error"])
        for row in rows:
            writer.writerow([row.order, row.precision, row.recall, row.f1,
                             row.error or ""])


def format_report(report: EvalReport, title: str = "evaluation") -> str:
    lines = [f"{title}: P={report.precision:.3f} R={report.recall:.3f} "
             f"F1={report.f1:.3f} (pred={report.predicted} gold={report.gold} "
             f"correct={report.correct})"]
    for label, sub in report.buckets.items():
        lines.append(f"  [{label:>3}] P={sub.precision:.3f} R={sub.recall:.3f} "
                     f"F1={sub.f1:.3f} (pred={sub.predicted} gold={sub.gold} "
                     f"correct={sub.correct})")
    return "\n".join(lines)
