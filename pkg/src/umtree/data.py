"""Datasets: domain types, line-delimited JSON I/O, filtering, and synthesis.

Dataset schema (one JSON object per line, UTF-8):
    {"text": str, "tokens": [str],
     "triplets": [{"head": {"begin": int, "end": int, "text": str},
                   "relation": str,
                   "tail": {"begin": int, "end": int, "text": str}}]}
Spans are inclusive token indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class EntitySpan:
    begin: int
    end: int
    text: str


@dataclass(frozen=True)
class Triplet:
    head: EntitySpan
    relation: str
    tail: EntitySpan

    def surface(self) -> tuple[str, str, str]:
        return (self.head.text, self.relation, self.tail.text)


@dataclass
class Sentence:
    text: str
    tokens: list[str]
    triplets: list[Triplet]


@dataclass
class LoadSummary:
    loaded: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class Dataset:
    sentences: list[Sentence]
    summary: LoadSummary | None = None

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


class RelationDict:
    """Dense relation name <-> id mapping; file form is a JSON array of names."""

    def __init__(self, names: list[str]):
        if len(set(names)) != len(names):
            raise DataError("duplicate relation names")
        self.names = list(names)
        self.ids = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def id(self, name: str) -> int:
        if name not in self.ids:
            raise DataError(f"unknown relation '{name}'")
        return self.ids[name]

    def name(self, rid: int) -> str:
        return self.names[rid]

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "RelationDict":
        names = sorted({t.relation for s in dataset for t in s.triplets})
        return cls(names)

    @classmethod
    def load(cls, path: str | Path) -> "RelationDict":
        with open(path, encoding="utf-8") as fh:
            names = json.load(fh)
        return cls(names)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.names, fh, ensure_ascii=False)
            fh.write("\n")


def tokenize(text: str, mode: str) -> list[str]:
    if mode == "space":
        return text.split(" ")
    if mode == "char":
        return list(text)
    raise DataError(f"unknown tokenization mode '{mode}'")


def _joiner(mode: str) -> str:
    return " " if mode == "space" else ""


def _span_from_obj(obj: dict, n_tokens: int, tokens: list[str], join: str) -> EntitySpan:
    begin, end, text = obj["begin"], obj["end"], obj["text"]
    if not (isinstance(begin, int) and isinstance(end, int)):
        raise DataError("span begin/end must be integers")
    if not (0 <= begin <= end < n_tokens):
        raise DataError(f"span [{begin}, {end}] out of range for {n_tokens} tokens")
    covered = join.join(tokens[begin:end + 1])
    if text != covered:
        raise DataError(f"span text {text!r} does not match covered tokens {covered!r}")
    return EntitySpan(begin, end, text)


def sentence_from_obj(obj: dict, mode: str = "space") -> Sentence:
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise DataError("tokens must be a list of strings")
    join = _joiner(mode)
    triplets = []
    for t in obj.get("triplets", []):
        head = _span_from_obj(t["head"], len(tokens), tokens, join)
        tail = _span_from_obj(t["tail"], len(tokens), tokens, join)
        relation = t["relation"]
        if not isinstance(relation, str):
            raise DataError("relation must be a string")
        triplets.append(Triplet(head, relation, tail))
    return Sentence(text=obj["text"], tokens=tokens, triplets=triplets)


def sentence_to_obj(sentence: Sentence) -> dict:
    def span(s: EntitySpan) -> dict:
        return {"begin": s.begin, "end": s.end, "text": s.text}

    return {
        "text": sentence.text,
        "tokens": sentence.tokens,
        "triplets": [
            {"head": span(t.head), "relation": t.relation, "tail": span(t.tail)}
            for t in sentence.triplets
        ],
    }


def load_jsonl(path: str | Path, mode: str = "space") -> Dataset:
    """Parse and validate a dataset file.

    A malformed JSON line aborts with its line number; a line violating the
    sentence invariants is rejected with a diagnostic and loading continues.
    """
    sentences: list[Sentence] = []
    summary = LoadSummary()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"{path}:{line_no}: malformed JSON: {err}") from err
            try:
                sentences.append(sentence_from_obj(obj, mode=mode))
            except (DataError, KeyError, TypeError) as err:
                summary.rejected.append((line_no, str(err)))
    summary.loaded = len(sentences)
    return Dataset(sentences, summary)


def save_jsonl(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sentence in dataset:
            fh.write(json.dumps(sentence_to_obj(sentence), ensure_ascii=False))
            fh.write("\n")


def filter_no_triplet(dataset: Dataset) -> Dataset:
    kept = [s for s in dataset if s.triplets]
    return Dataset(kept)


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Knobs for reproducible synthetic corpora.

    overlap is the fraction of test triplet instances whose (head, relation,
    tail) surface occurs in the generated training set; the remainder are
    novel recombinations of seen components. combination_skew is the
    probability that a multi-triplet training sentence carries one of the
    designated co-occurring type pairs; multi-triplet test sentences never
    carry a designated pair (their types are systematically recombined
    across pairs).
    """

    vocab_size: int = 100
    n_relations: int = 5
    n_train: int = 200
    n_test: int = 50
    triplets_per_sentence: tuple[tuple[int, float], ...] = ((1, 0.5), (2, 0.5))
    combination_skew: float = 0.0
    overlap: float = 1.0
    seed: int = 0

    def relation_names(self) -> list[str]:
        return [f"rel_{i}" for i in range(self.n_relations)]

    def validate(self) -> None:
        if self.vocab_size < self.n_relations + 12:
            raise DataError(
                f"vocab_size {self.vocab_size} too small for {self.n_relations} "
                "relations plus entity and filler tokens")
        if self.n_relations < 1 or self.n_train < 1 or self.n_test < 0:
            raise DataError("counts must be positive")
        if not 0.0 <= self.overlap <= 1.0:
            raise DataError("overlap must be in [0, 1]")
        if not 0.0 <= self.combination_skew <= 1.0:
            raise DataError("combination_skew must be in [0, 1]")
        if not self.triplets_per_sentence:
            raise DataError("triplets_per_sentence distribution is empty")
        for count, weight in self.triplets_per_sentence:
            if count < 1 or weight < 0:
                raise DataError("triplet counts must be >= 1 with nonnegative weights")
        if sum(w for _, w in self.triplets_per_sentence) <= 0:
            raise DataError("triplets_per_sentence weights sum to zero")
        if self.combination_skew > 0 and not any(
                c >= 2 and w > 0 for c, w in self.triplets_per_sentence):
            raise DataError(
                "combination_skew needs designated pairs to co-occur, but the "
                "triplet-count distribution never yields two triplets per sentence")


class _TypePool:
    """Triplet types (head surface, relation, tail surface) with pair structure."""

    def __init__(self, spec: SyntheticSpec, rng: np.random.Generator):
        self.rng = rng
        n_fill = max(3, spec.vocab_size // 5)
        n_entity_tokens = spec.vocab_size - spec.n_relations - n_fill
        if n_entity_tokens < 6:
            raise DataError("vocab budget leaves too few entity tokens")
        self.fillers = [f"w{i}" for i in range(n_fill)]
        self.markers = [f"vrb{i}" for i in range(spec.n_relations)]
        self.relations = spec.relation_names()
        singles = [f"n{i}" for i in range(n_entity_tokens)]
        # one in four entity surfaces spans two tokens
        self.entities = list(singles)
        for i in range(0, n_entity_tokens - 1, 8):
            self.entities.append(f"{singles[i]} {singles[i + 1]}")

    def sample_type(self, exclude: set, max_tries: int = 500) -> tuple[str, str, str]:
        for _ in range(max_tries):
            h = self.entities[self.rng.integers(len(self.entities))]
            t = self.entities[self.rng.integers(len(self.entities))]
            r = self.relations[self.rng.integers(len(self.relations))]
            if h != t and (h, r, t) not in exclude:
                return (h, r, t)
        raise DataError("could not sample a fresh triplet type; pools too small")


def _entity_tokens(surface: str) -> list[str]:
    return surface.split(" ")


def _types_compatible(types: list[tuple[str, str, str]]) -> bool:
    """All entity surfaces across the sentence must be distinct."""
    ents = [e for (h, _, t) in types for e in (h, t)]
    return len(set(ents)) == len(ents)


def _assemble_sentence(types: list[tuple[str, str, str]], pool: _TypePool,
                       rng: np.random.Generator) -> Sentence:
    order = rng.permutation(len(types))
    tokens: list[str] = []
    spans: dict[int, tuple[EntitySpan, EntitySpan]] = {}

    def fillers(lo, hi):
        for _ in range(int(rng.integers(lo, hi + 1))):
            tokens.append(pool.fillers[rng.integers(len(pool.fillers))])

    fillers(0, 2)
    for idx in order:
        h, r, t = types[idx]
        h_toks = _entity_tokens(h)
        t_toks = _entity_tokens(t)
        hb = len(tokens)
        tokens.extend(h_toks)
        he = len(tokens) - 1
        tokens.append(pool.markers[pool.relations.index(r)])
        tb = len(tokens)
        tokens.extend(t_toks)
        te = len(tokens) - 1
        spans[idx] = (EntitySpan(hb, he, h), EntitySpan(tb, te, t))
        fillers(1, 2)
    fillers(0, 1)

    triplets = [Triplet(spans[i][0], types[i][1], spans[i][1]) for i in range(len(types))]
    return Sentence(text=" ".join(tokens), tokens=tokens, triplets=triplets)


@dataclass
class SynthInfo:
    """Bookkeeping from generation, for experiments and measurement."""

    train_types: list[tuple[str, str, str]]
    designated_pairs: list[tuple[tuple[str, str, str], tuple[str, str, str]]]
    novel_types: list[tuple[str, str, str]]


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Build (train, test) datasets; bitwise reproducible for a given seed."""
    train, test, _ = generate_synthetic_with_info(spec)
    return train, test


def generate_synthetic_with_info(spec: SyntheticSpec) -> tuple[Dataset, Dataset, SynthInfo]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    pool = _TypePool(spec, rng)

    counts = np.array([c for c, _ in spec.triplets_per_sentence])
    weights = np.array([w for _, w in spec.triplets_per_sentence], dtype=float)
    weights = weights / weights.sum()

    def draw_k() -> int:
        return int(counts[rng.choice(len(counts), p=weights)])

    # training type pool sized so each type recurs several times
    n_train_instances = spec.n_train * float((counts * weights).sum())
    n_types = max(4, int(round(n_train_instances / 6.0)))
    train_types: list[tuple[str, str, str]] = []
    type_set: set = set()
    while len(train_types) < n_types:
        t = pool.sample_type(type_set)
        train_types.append(t)
        type_set.add(t)
    pairs = [(train_types[i], train_types[i + 1]) for i in range(0, n_types - 1, 2)]
    pair_of = {}
    for pi, (a, b) in enumerate(pairs):
        pair_of[a] = pi
        pair_of[b] = pi
    if spec.combination_skew > 0 and len(pairs) < 2:
        raise DataError("combination_skew requires at least two designated type pairs")

    def pick_types(k: int, chooser, max_tries: int = 200) -> list[tuple[str, str, str]]:
        for _ in range(max_tries):
            cand = chooser(k)
            if cand is not None and len(set(cand)) == k and _types_compatible(cand):
                return cand
        raise DataError("could not assemble a sentence under the entity-distinctness rule")

    def train_chooser(k: int):
        chosen: list[tuple[str, str, str]] = []
        if k >= 2 and rng.uniform() < spec.combination_skew:
            chosen.extend(pairs[rng.integers(len(pairs))])
        while len(chosen) < k:
            chosen.append(train_types[rng.integers(len(train_types))])
        return chosen[:k]

    train_sentences = [
        _assemble_sentence(pick_types(draw_k(), train_chooser), pool, rng)
        for _ in range(spec.n_train)
    ]
    used_types = sorted({t.surface() for s in train_sentences for t in s.triplets})
    if spec.overlap > 0 and not used_types:
        raise DataError("overlap > 0 requires a nonempty training set")

    # novel types recombine a seen (head, relation) with a tail seen elsewhere
    def novel_of(base: tuple[str, str, str]) -> tuple[str, str, str]:
        h, r, _ = base
        for _ in range(500):
            donor = train_types[rng.integers(len(train_types))]
            cand = (h, r, donor[2])
            if cand not in type_set and cand[0] != cand[2]:
                return cand
        raise DataError("could not derive a novel recombined type; pools too entangled")

    novel_pool = [novel_of(t) for t in train_types]
    novel_pair_of = {novel_pool[i]: pair_of.get(train_types[i], 0)
                     for i in range(len(train_types))}

    test_ks = [draw_k() for _ in range(spec.n_test)]
    total = sum(test_ks)
    n_shared = int(round(spec.overlap * total))
    flags = np.array([True] * n_shared + [False] * (total - n_shared))
    rng.shuffle(flags)
    flags = list(flags)

    def test_chooser_for(sent_flags: list[bool]):
        def chooser(k: int):
            chosen: list[tuple[str, str, str]] = []
            chosen_pairs: set[int] = set()
            for flag in sent_flags:
                for _ in range(200):
                    if flag:
                        cand = used_types[rng.integers(len(used_types))]
                    else:
                        cand = novel_pool[rng.integers(len(novel_pool))]
                    pi = pair_of.get(cand, novel_pair_of.get(cand))
                    # never reunite a designated train pair in a test sentence
                    if pi is not None and pi in chosen_pairs and flag:
                        continue
                    chosen.append(cand)
                    if pi is not None:
                        chosen_pairs.add(pi)
                    break
                else:
                    return None
            return chosen
        return chooser

    test_sentences = []
    for k in test_ks:
        sent_flags = [flags.pop() for _ in range(k)]
        test_sentences.append(
            _assemble_sentence(pick_types(k, test_chooser_for(sent_flags)), pool, rng))

    info = SynthInfo(train_types=train_types, designated_pairs=pairs,
                     novel_types=novel_pool)
    return Dataset(train_sentences), Dataset(test_sentences), info


def save_predictions(path: str | Path, dataset: Dataset,
                     predictions: list[set[Triplet]]) -> None:
    """One JSON object per sentence, {"text", "triplets"}, token-index spans;
    triplets are ordered deterministically."""
    if len(predictions) != len(dataset.sentences):
        raise DataError("predictions do not align with the dataset")

    def key(t: Triplet):
        return (t.head.begin, t.head.end, t.relation, t.tail.begin, t.tail.end)

    with open(path, "w", encoding="utf-8") as fh:
        for sentence, preds in zip(dataset, predictions):
            obj = {
                "text": sentence.text,
                "triplets": [
                    {"head": {"begin": t.head.begin, "end": t.head.end,
                              "text": t.head.text},
                     "relation": t.relation,
                     "tail": {"begin": t.tail.begin, "end": t.tail.end,
                              "text": t.tail.text}}
                    for t in sorted(preds, key=key)
                ],
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def load_predictions(path: str | Path) -> list[tuple[str, set[tuple[str, str, str]]]]:
    """Read a prediction file back as (text, surface set) pairs."""
    out: list[tuple[str, set[tuple[str, str, str]]]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                surfaces = {
                    (t["head"]["text"], t["relation"], t["tail"]["text"])
                    for t in obj["triplets"]
                }
                out.append((obj["text"], surfaces))
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise DataError(f"{path}:{line_no}: bad prediction line: {err}") from err
    return out


def align_predictions(dataset: Dataset,
                      predictions: list[tuple[str, set]]) -> list[set]:
    """Match a prediction file against a dataset by position, verifying texts."""
    if len(predictions) != len(dataset.sentences):
        raise DataError(
            f"prediction count {len(predictions)} != dataset size {len(dataset)}")
    aligned = []
    for i, (sentence, (text, surfaces)) in enumerate(zip(dataset, predictions)):
        if text != sentence.text:
            raise DataError(f"prediction {i} is for a different sentence: "
                            f"{text!r} vs {sentence.text!r}")
        aligned.append(surfaces)
    return aligned


def measure_overlap(train: Dataset, test: Dataset) -> float:
    """Fraction of test triplet instances whose surface occurs anywhere in train."""
    train_surfaces = {t.surface() for s in train for t in s.triplets}
    instances = [t.surface() for s in test for t in s.triplets]
    if not instances:
        return 0.0
    return sum(1 for i in instances if i in train_surfaces) / len(instances)
