"""Seeded training loop shared by the tree model and the flat baseline."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .data import Dataset, Sentence
from .evaluation import EvalReport, gold_surfaces, triplet_f1
from .optim import Adam

log = logging.getLogger(__name__)


def predict_surfaces(model, dataset: Dataset, jobs: int = 1) -> list[set]:
    """Decode every sentence with frozen parameters; order is preserved."""
    def one(sentence: Sentence) -> set:
        return {t.surface() for t in model.predict(sentence)}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, dataset.sentences))
    return [one(s) for s in dataset.sentences]


def evaluate_model(model, dataset: Dataset, jobs: int = 1) -> EvalReport:
    preds = predict_surfaces(model, dataset, jobs=jobs)
    return triplet_f1(preds, [gold_surfaces(s) for s in dataset])


def _clip_gradients(params, max_norm: float) -> None:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor


@dataclass
class TrainResult:
    metrics: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = -1.0
    excluded: int = 0

    def final_dev_f1(self) -> float | None:
        for entry in reversed(self.metrics):
            if entry["dev_f1"] is not None:
                return entry["dev_f1"]
        return None


def train_model(model, train: Dataset, dev: Dataset | None = None, *,
                epochs: int = 50, batch_size: int = 32, lr: float = 1e-3,
                lr_schedule: str = "constant", lr_min: float = 0.0,
                grad_clip: float = 2.0,
                beta1: float = 0.9, beta2: float = 0.999, adam_eps: float = 1e-8,
                seed: int = 0, out_dir: str | Path | None = None,
                eval_every: int = 1, early_stop_f1: float = 0.0,
                keep_all_checkpoints: bool = False, jobs: int = 1,
                quiet: bool = False) -> TrainResult:
    """Adam over shuffled mini-batches; loss is summed per sentence and
    averaged over the batch. Writes per-epoch metrics and checkpoints when
    out_dir is given, tracking the best epoch by dev F1.
    """
    if lr_schedule not in ("constant", "cosine"):
        raise ValueError(f"unknown lr_schedule '{lr_schedule}'")
    params = model.parameters()
    opt = Adam(params, lr=lr, beta1=beta1, beta2=beta2, eps=adam_eps)
    rng = np.random.default_rng(seed)
    result = TrainResult()

    def lr_at(epoch: int) -> float:
        if lr_schedule == "constant":
            return lr
        span = max(1, epochs - 1)
        return lr_min + (lr - lr_min) * 0.5 * (1.0 + np.cos(np.pi * (epoch - 1) / span))

    usable = getattr(model, "usable", None)
    sentences = list(train.sentences)
    if usable is not None:
        kept = [s for s in sentences if usable(s)]
        result.excluded = len(sentences) - len(kept)
        if result.excluded:
            log.warning("excluded %d sentences with over-length flattened targets",
                        result.excluded)
        sentences = kept
    if not sentences:
        raise ValueError("no trainable sentences")

    out_path = Path(out_dir) if out_dir is not None else None
    metrics_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_path / "metrics.jsonl", "w", encoding="utf-8")

    try:
        for epoch in range(1, epochs + 1):
            started = time.perf_counter()
            opt.lr = lr_at(epoch)
            order = rng.permutation(len(sentences))
            epoch_loss = 0.0
            for lo in range(0, len(order), batch_size):
                batch = order[lo:lo + batch_size]
                scale = 1.0 / len(batch)
                opt.zero_grad()
                for idx in batch:
                    loss = model.loss(sentences[int(idx)])
                    epoch_loss += loss.item()
                    ad.backward(loss * scale)
                if grad_clip:
                    _clip_gradients(params, grad_clip)
                opt.step()

            dev_report = None
            if dev is not None and (epoch % eval_every == 0 or epoch == epochs):
                dev_report = evaluate_model(model, dev, jobs=jobs)

            entry = {
                "epoch": epoch,
                "train_loss": epoch_loss / len(sentences),
                "dev_precision": dev_report.precision if dev_report else None,
                "dev_recall": dev_report.recall if dev_report else None,
                "dev_f1": dev_report.f1 if dev_report else None,
                "wall_seconds": time.perf_counter() - started,
            }
            result.metrics.append(entry)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(entry) + "\n")
                metrics_fh.flush()
            if not quiet:
                dev_txt = f" dev_f1={entry['dev_f1']:.3f}" if dev_report else ""
                log.info("epoch %d loss=%.4f%s (%.1fs)", epoch,
                         entry["train_loss"], dev_txt, entry["wall_seconds"])

            if out_path is not None:
                checkpoint.save(out_path / "last.ckpt", params)
                if keep_all_checkpoints:
                    checkpoint.save(out_path / f"epoch_{epoch:03d}.ckpt", params)

            current_f1 = dev_report.f1 if dev_report else None
            if current_f1 is not None and current_f1 > result.best_f1:
                result.best_f1 = current_f1
                result.best_epoch = epoch
                if out_path is not None:
                    checkpoint.save(out_path / "best.ckpt", params)
            if early_stop_f1 and current_f1 is not None and current_f1 >= early_stop_f1:
                log.info("early stop at epoch %d: dev F1 %.3f >= %.3f",
                         epoch, current_f1, early_stop_f1)
                break
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    if result.best_epoch == 0:
        # no dev evaluation happened; the final weights stand in for best
        result.best_epoch = len(result.metrics)
        if out_path is not None:
            checkpoint.save(out_path / "best.ckpt", params)
    return result
