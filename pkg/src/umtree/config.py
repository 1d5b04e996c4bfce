"""Run configuration: a flat key = value text file, every key overridable by a
command-line flag of the same name."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .decoder import ORDER_KEYS


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    # paths
    train_path: str = ""
    dev_path: str = ""
    test_path: str = ""
    vocab_path: str = ""
    relations_path: str = ""
    checkpoint_path: str = ""
    predictions_path: str = ""
    out: str = "out"
    # model
    model: str = "tree"           # tree | flat
    embedding_dim: int = 200
    hidden_dim: int = 200
    order: str = "rth"
    threshold: float = 0.5
    max_span_len: int = 10
    max_d1: int = 0               # 0 = uncapped
    max_d2: int = 10
    max_d3: int = 10
    max_decode_len: int = 50      # flat baseline budget
    # data
    tokenization: str = "space"   # space | char
    max_len: int = 100
    truncate: bool = False
    min_freq: int = 1
    # training
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    lr_schedule: str = "constant"  # constant | cosine
    lr_min: float = 0.0
    grad_clip: float = 2.0        # global-norm cap; 0 = off
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1
    early_stop_f1: float = 0.0    # 0 = off
    keep_all_checkpoints: bool = False
    jobs: int = 1
    figures: bool = True
    # ab-split
    ab_fraction: float = 0.6
    # synthetic corpus
    synth_vocab_size: int = 100
    synth_relations: int = 5
    synth_train: int = 200
    synth_test: int = 50
    synth_triplet_dist: str = "1:0.5,2:0.5"
    synth_overlap: float = 1.0
    synth_skew: float = 0.0

    def validate(self) -> None:
        if self.embedding_dim <= 0 or self.hidden_dim <= 0:
            raise ConfigError("model dimensions must be positive")
        if self.order not in ORDER_KEYS:
            raise ConfigError(f"order must be one of {ORDER_KEYS}, got '{self.order}'")
        if self.model not in ("tree", "flat"):
            raise ConfigError(f"model must be 'tree' or 'flat', got '{self.model}'")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must be strictly between 0 and 1")
        if self.tokenization not in ("space", "char"):
            raise ConfigError("tokenization must be 'space' or 'char'")
        if self.epochs < 1 or self.batch_size < 1 or self.jobs < 1:
            raise ConfigError("epochs, batch_size and jobs must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError("lr_schedule must be 'constant' or 'cosine'")

    def joiner(self) -> str:
        return " " if self.tokenization == "space" else ""

    def triplet_distribution(self) -> tuple[tuple[int, float], ...]:
        pairs = []
        for part in self.synth_triplet_dist.split(","):
            count, _, weight = part.partition(":")
            try:
                pairs.append((int(count), float(weight)))
            except ValueError as err:
                raise ConfigError(
                    f"bad synth_triplet_dist entry {part!r}; "
                    "expected count:weight pairs like '1:0.5,2:0.5'") from err
        return tuple(pairs)

    def require_paths(self, *names: str) -> None:
        """Subcommand precondition: the named path keys are set and exist."""
        for name in names:
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"config key '{name}' is required for this command")
            if not Path(value).exists():
                raise ConfigError(f"{name} '{value}' does not exist")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key '{key}'")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        return _bool(raw)
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def load_config(path: str | Path) -> RunConfig:
    cfg = RunConfig()
    apply_file(cfg, path)
    return cfg


def apply_file(cfg: RunConfig, path: str | Path) -> None:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            try:
                setattr(cfg, key, _parse_value(key, raw))
            except ConfigError as err:
                raise ConfigError(f"{path}:{line_no}: {err}") from err


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> None:
    for key, raw in overrides.items():
        if raw is None:
            continue
        setattr(cfg, key, _parse_value(key, str(raw)))


def config_keys() -> list[str]:
    return list(_FIELD_TYPES)
