"""Command-line entry point: train, evaluate, predict, analyze, grad-check,
synth and ab-split over a flat key = value config file."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import checkpoint, evaluation, figures
from .config import ConfigError, RunConfig, apply_file, apply_overrides, config_keys
from .data import (Dataset, RelationDict, SyntheticSpec, align_predictions,
                   filter_no_triplet, generate_synthetic, load_jsonl,
                   load_predictions, measure_overlap, save_jsonl,
                   save_predictions)
from .decoder import DecodeLimits, TreeModel
from .flat import FlatModel, OutputVocab
from .gradsuite import MODEL_TOLERANCE, OP_TOLERANCE, run_suite
from .train import predict_surfaces, train_model
from .vocab import Vocab

log = logging.getLogger("umtree")

FLAT_VOCAB_FILE = "flat_vocab.txt"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="umtree",
        description="joint entity/relation triplet extraction with an "
                    "unordered multi-tree decoder")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("train", "train a model, writing checkpoints and a metrics log"),
        ("evaluate", "score predictions (or a checkpoint) against a test set"),
        ("predict", "decode a test set with a trained checkpoint"),
        ("analyze", "bucketed breakdowns: triplet counts and reoccurrence"),
        ("grad-check", "finite-difference check of every op and the full loss"),
        ("synth", "materialize a synthetic corpus"),
        ("ab-split", "partition a test set by training-subset triplet overlap"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="key = value config file")
        for key in config_keys():
            flags = [f"--{key.replace('_', '-')}"]
            if "_" in key:
                flags.append(f"--{key}")
            cmd.add_argument(*flags, dest=key, default=None, metavar="V")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        apply_file(cfg, args.config)
    overrides = {k: getattr(args, k) for k in config_keys()}
    apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_dataset(path: str, cfg: RunConfig) -> Dataset:
    ds = load_jsonl(path, mode=cfg.tokenization)
    if ds.summary and ds.summary.rejected:
        log.warning("%s: rejected %d invalid lines", path, len(ds.summary.rejected))
    return ds


def _vocab_for(cfg: RunConfig, train: Dataset | None, out: Path) -> Vocab:
    if cfg.vocab_path:
        return Vocab.load(cfg.vocab_path)
    if train is None:
        raise ConfigError("either vocab_path or train_path is required")
    vocab = Vocab.build(train, min_freq=cfg.min_freq)
    vocab.save(out / "vocab.tsv")
    return vocab


def _relations_for(cfg: RunConfig, train: Dataset | None, out: Path) -> RelationDict:
    if cfg.relations_path:
        return RelationDict.load(cfg.relations_path)
    if train is None:
        raise ConfigError("either relations_path or train_path is required")
    relations = RelationDict.from_dataset(train)
    relations.save(out / "relations.json")
    return relations


def _out_vocab_for(cfg: RunConfig, relations: RelationDict,
                   train: Dataset | None, out: Path) -> OutputVocab:
    stored = Path(cfg.out) / FLAT_VOCAB_FILE
    if train is not None:
        ov = OutputVocab.build(train.sentences, relations)
        with open(out / FLAT_VOCAB_FILE, "w", encoding="utf-8") as fh:
            fh.write("\n".join(ov.symbols[4 + len(relations.names):]) + "\n")
        return ov
    if not stored.exists():
        raise ConfigError(f"flat model needs {stored} (produced by train) "
                          "or a train_path")
    words = [w for w in stored.read_text(encoding="utf-8").splitlines() if w]
    return OutputVocab(relations, words)


def build_model(cfg: RunConfig, vocab: Vocab, relations: RelationDict,
                out_vocab: OutputVocab | None = None):
    if cfg.model == "tree":
        return TreeModel(
            vocab, relations, order=cfg.order, emb_dim=cfg.embedding_dim,
            hidden=cfg.hidden_dim, threshold=cfg.threshold,
            max_span_len=cfg.max_span_len,
            limits=DecodeLimits(cfg.max_d1, cfg.max_d2, cfg.max_d3),
            max_len=cfg.max_len, truncate=cfg.truncate, joiner=cfg.joiner(),
            seed=cfg.seed)
    return FlatModel(
        vocab, relations, out_vocab, emb_dim=cfg.embedding_dim,
        hidden=cfg.hidden_dim, max_decode_len=cfg.max_decode_len,
        max_len=cfg.max_len, truncate=cfg.truncate, joiner=cfg.joiner(),
        seed=cfg.seed)


def _restore_model(cfg: RunConfig, out: Path):
    cfg.require_paths("checkpoint_path", "vocab_path", "relations_path")
    vocab = Vocab.load(cfg.vocab_path)
    relations = RelationDict.load(cfg.relations_path)
    out_vocab = None
    if cfg.model == "flat":
        out_vocab = _out_vocab_for(cfg, relations, None, out)
    model = build_model(cfg, vocab, relations, out_vocab)
    checkpoint.load(cfg.checkpoint_path, model.parameters())
    return model


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> int:
    cfg.require_paths("train_path")
    out = _out_dir(cfg)
    train = filter_no_triplet(_load_dataset(cfg.train_path, cfg))
    dev = None
    if cfg.dev_path:
        cfg.require_paths("dev_path")
        dev = filter_no_triplet(_load_dataset(cfg.dev_path, cfg))
    vocab = _vocab_for(cfg, train, out)
    relations = _relations_for(cfg, train, out)
    out_vocab = None
    if cfg.model == "flat":
        out_vocab = _out_vocab_for(cfg, relations, train, out)
    model = build_model(cfg, vocab, relations, out_vocab)

    with open(out / "config_used.txt", "w", encoding="utf-8") as fh:
        for key, value in asdict(cfg).items():
            fh.write(f"{key} = {value}\n")

    result = train_model(
        model, train, dev, epochs=cfg.epochs, batch_size=cfg.batch_size,
        lr=cfg.lr, lr_schedule=cfg.lr_schedule, lr_min=cfg.lr_min,
        grad_clip=cfg.grad_clip, beta1=cfg.beta1, beta2=cfg.beta2, adam_eps=cfg.adam_eps,
        seed=cfg.seed, out_dir=out, eval_every=cfg.eval_every,
        early_stop_f1=cfg.early_stop_f1,
        keep_all_checkpoints=cfg.keep_all_checkpoints, jobs=cfg.jobs)
    if cfg.figures:
        figures.render_training_curve(result.metrics, out / "training.png")
    best = f"best epoch {result.best_epoch}"
    if result.best_f1 >= 0:
        best += f" (dev F1 {result.best_f1:.3f})"
    print(f"trained {cfg.model} model for {len(result.metrics)} epochs; {best}; "
          f"artifacts in {out}")
    return 0


def _predictions_for(cfg: RunConfig, test: Dataset, out: Path) -> list[set]:
    if cfg.predictions_path:
        cfg.require_paths("predictions_path")
        return align_predictions(test, load_predictions(cfg.predictions_path))
    model = _restore_model(cfg, out)
    return predict_surfaces(model, test, jobs=cfg.jobs)


def cmd_evaluate(cfg: RunConfig) -> int:
    cfg.require_paths("test_path")
    out = _out_dir(cfg)
    test = _load_dataset(cfg.test_path, cfg)
    preds = _predictions_for(cfg, test, out)
    report = evaluation.bucket_by_triplet_count(test, preds)
    evaluation.write_report_csv(report, out / "eval.csv")
    evaluation.write_report_json(report, out / "eval.json")
    if cfg.figures:
        figures.render_bucket_figure(report, out / "eval.png",
                                     "triplet F1", "gold triplets per sentence")
    print(evaluation.format_report(report, "test"))
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    cfg.require_paths("test_path")
    out = _out_dir(cfg)
    test = _load_dataset(cfg.test_path, cfg)
    model = _restore_model(cfg, out)
    predictions = [model.predict(s) for s in test]
    save_predictions(out / "predictions.jsonl", test, predictions)
    total = sum(len(p) for p in predictions)
    print(f"wrote {total} triplets for {len(test)} sentences "
          f"to {out / 'predictions.jsonl'}")
    return 0


def cmd_analyze(cfg: RunConfig) -> int:
    cfg.require_paths("train_path", "test_path", "predictions_path")
    out = _out_dir(cfg)
    train = _load_dataset(cfg.train_path, cfg)
    test = _load_dataset(cfg.test_path, cfg)
    preds = align_predictions(test, load_predictions(cfg.predictions_path))

    buckets = evaluation.bucket_by_triplet_count(test, preds)
    evaluation.write_report_csv(buckets, out / "buckets.csv")
    evaluation.write_report_json(buckets, out / "buckets.json")
    reoccur = evaluation.reoccurrence_buckets(train, test, preds)
    evaluation.write_report_csv(reoccur, out / "reoccurrence.csv")
    evaluation.write_report_json(reoccur, out / "reoccurrence.json")
    if cfg.figures:
        figures.render_bucket_figure(buckets, out / "buckets.png",
                                     "F1 by sentence triplet count",
                                     "gold triplets per sentence")
        figures.render_reoccurrence_figure(reoccur, out / "reoccurrence.png")
    print(evaluation.format_report(buckets, "by triplet count"))
    print(evaluation.format_report(reoccur, "by training reoccurrence (cumulative)"))
    return 0


def cmd_grad_check(cfg: RunConfig) -> int:
    ops, model_err, ok = run_suite(cfg.seed)
    for name, err in sorted(ops.items()):
        status = "ok" if err < OP_TOLERANCE else "FAIL"
        print(f"op {name:<18} max_rel_err={err:.3e}  [{status}]")
    status = "ok" if model_err < MODEL_TOLERANCE else "FAIL"
    print(f"full-model loss    max_rel_err={model_err:.3e}  [{status}]")
    worst = max(max(ops.values()), model_err)
    print(f"max_rel_err={worst:.3e} over {len(ops)} ops + full model: "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    spec = SyntheticSpec(
        vocab_size=cfg.synth_vocab_size, n_relations=cfg.synth_relations,
        n_train=cfg.synth_train, n_test=cfg.synth_test,
        triplets_per_sentence=cfg.triplet_distribution(),
        combination_skew=cfg.synth_skew, overlap=cfg.synth_overlap,
        seed=cfg.seed)
    train, test = generate_synthetic(spec)
    save_jsonl(train, out / "train.jsonl")
    save_jsonl(test, out / "test.jsonl")
    RelationDict(spec.relation_names()).save(out / "relations.json")
    print(f"wrote {len(train)} train / {len(test)} test sentences to {out}; "
          f"measured triplet overlap {measure_overlap(train, test):.3f}")
    return 0


def cmd_ab_split(cfg: RunConfig) -> int:
    cfg.require_paths("train_path", "test_path")
    out = _out_dir(cfg)
    train = _load_dataset(cfg.train_path, cfg)
    test = _load_dataset(cfg.test_path, cfg)
    result = evaluation.ab_split(train, test, subset_fraction=cfg.ab_fraction,
                                 seed=cfg.seed)
    save_jsonl(result.train_subset, out / "ab_train.jsonl")
    save_jsonl(result.test_a, out / "ab_test_a.jsonl")
    save_jsonl(result.test_b, out / "ab_test_b.jsonl")
    counts = {"train_subset": len(result.train_subset),
              "test_a": len(result.test_a), "test_b": len(result.test_b),
              "dropped": result.dropped}
    with open(out / "ab_counts.json", "w", encoding="utf-8") as fh:
        json.dump(counts, fh)
        fh.write("\n")
    print(f"ab-split: {counts}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "analyze": cmd_analyze,
    "grad-check": cmd_grad_check,
    "synth": cmd_synth,
    "ab-split": cmd_ab_split,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except Exception as err:  # noqa: BLE001 - single machine-parsable error line
        print(f"ERROR {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
