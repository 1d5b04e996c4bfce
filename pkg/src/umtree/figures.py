"""Matplotlib renderings of evaluation reports, written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport  # noqa: E402


def _save(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bucket_figure(report: EvalReport, path: str | Path,
                         title: str, xlabel: str) -> None:
    """Grouped P/R/F1 bars per bucket, overall first."""
    labels = ["all"] + list(report.buckets)
    reports = [report] + list(report.buckets.values())
    xs = range(len(labels))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 3.2))
    ax.bar([x - width for x in xs], [r.precision for r in reports], width,
           label="precision")
    ax.bar(list(xs), [r.recall for r in reports], width, label="recall")
    ax.bar([x + width for x in xs], [r.f1 for r in reports], width, label="F1")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)


def render_reoccurrence_figure(report: EvalReport, path: str | Path,
                               title: str = "score vs. training reoccurrence") -> None:
    """F1 as the reoccurrence-frequency ceiling grows."""
    ks, f1s = [], []
    for label, sub in report.buckets.items():
        ks.append(label)
        f1s.append(sub.f1)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(range(len(ks)), f1s, marker="o")
    ax.set_xticks(range(len(ks)))
    ax.set_xticklabels(ks)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("training frequency below")
    ax.set_ylabel("F1")
    ax.set_title(title)
    _save(fig, path)


def render_training_curve(metrics: list[dict], path: str | Path) -> None:
    epochs = [m["epoch"] for m in metrics]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(epochs, [m["train_loss"] for m in metrics], label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    dev = [(m["epoch"], m["dev_f1"]) for m in metrics if m["dev_f1"] is not None]
    if dev:
        ax2 = ax.twinx()
        ax2.plot([e for e, _ in dev], [f for _, f in dev], color="tab:orange",
                 label="dev F1")
        ax2.set_ylabel("dev F1")
        ax2.set_ylim(0, 1.05)
    ax.set_title("training")
    _save(fig, path)
