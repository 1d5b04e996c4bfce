"""Unordered-multi-tree triplet decoder.

Each triplet is decoded as an independent depth-3 root-to-leaf path. A path
owns its decoder state and a private scratchpad memory: every step attends
over the previous scratchpad, then rewrites it by convolving the pooled
context (replicated to sequence length) with the old memory. Training
teacher-forces the gold tree; decoding expands predictions layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import EntitySpan, RelationDict, Sentence, Triplet
from .encoder import Encoder, EncoderOutput
from .layers import Conv1d, Lstm, uniform_init
from .vocab import Vocab

HEAD, RELATION, TAIL = "head", "relation", "tail"

# decoder scratchpad rewrite reaches two tokens each way: wide enough for an
# entity to see past its relation marker to the partner entity
DEC_CONV_WIDTH = 5

ORDER_KEYS = ("hrt", "htr", "rht", "rth", "thr", "trh")
_KIND = {"h": HEAD, "r": RELATION, "t": TAIL}


@dataclass(frozen=True)
class DecodeOrder:
    """Permutation of {head, relation, tail} fixing what each tree depth predicts."""

    key: str

    def __post_init__(self):
        if self.key not in ORDER_KEYS:
            raise ValueError(f"order must be one of {ORDER_KEYS}, got '{self.key}'")

    @property
    def kinds(self) -> tuple[str, str, str]:
        return tuple(_KIND[ch] for ch in self.key)

    def values_of(self, triplet: Triplet, relations: RelationDict) -> tuple:
        by_kind = {
            HEAD: (triplet.head.begin, triplet.head.end),
            RELATION: relations.id(triplet.relation),
            TAIL: (triplet.tail.begin, triplet.tail.end),
        }
        return tuple(by_kind[k] for k in self.kinds)

    def triplet_of(self, values: tuple, relations: RelationDict,
                   tokens: list[str], join: str) -> Triplet:
        by_kind = dict(zip(self.kinds, values))

        def span(v: tuple[int, int]) -> EntitySpan:
            return EntitySpan(v[0], v[1], join.join(tokens[v[0]:v[1] + 1]))

        return Triplet(head=span(by_kind[HEAD]),
                       relation=relations.name(by_kind[RELATION]),
                       tail=span(by_kind[TAIL]))


ALL_ORDERS = tuple(DecodeOrder(k) for k in ORDER_KEYS)


@dataclass(frozen=True)
class PrefixItem:
    kind: str  # "sos" | "relation" | "entity"
    relation_id: int | None = None
    span: tuple[int, int] | None = None

    @staticmethod
    def sos() -> "PrefixItem":
        return PrefixItem("sos")

    @staticmethod
    def rel(rid: int) -> "PrefixItem":
        return PrefixItem("relation", relation_id=rid)

    @staticmethod
    def entity(begin: int, end: int) -> "PrefixItem":
        return PrefixItem("entity", span=(begin, end))


def _item_for(kind: str, value) -> PrefixItem:
    if kind == RELATION:
        return PrefixItem.rel(value)
    return PrefixItem.entity(*value)


@dataclass
class DecodePath:
    """A partial root-to-leaf path: decided items plus private decoder memory."""

    depth: int
    items: tuple[PrefixItem, ...]
    state: tuple[Tensor, Tensor]
    scratchpad: Tensor
    steps_taken: int = 0


@dataclass
class StepTargets:
    kind: str  # "relation" | "entity"
    relations: np.ndarray | None = None  # multi-hot [r]
    begins: np.ndarray | None = None     # multi-hot [n]
    ends: np.ndarray | None = None       # multi-hot [n]


@dataclass
class DecodeLimits:
    """Per-depth fan-out caps; 0 means uncapped."""

    max_d1: int = 0
    max_d2: int = 10
    max_d3: int = 10

    def cap(self, depth: int) -> int:
        return (self.max_d1, self.max_d2, self.max_d3)[depth - 1]


@dataclass
class DecodeStats:
    steps_per_triplet: list[int] = field(default_factory=list)
    paths_expanded: int = 0


# ---------------------------------------------------------------------------
# Gold tree expansion
# ---------------------------------------------------------------------------

def _check_spans(sentence: Sentence) -> None:
    n = len(sentence.tokens)
    for t in sentence.triplets:
        for s in (t.head, t.tail):
            if not (0 <= s.begin <= s.end < n):
                raise ValueError(
                    f"triplet span [{s.begin}, {s.end}] out of range for {n} tokens")


def build_gold_tree(sentence: Sentence, order: DecodeOrder,
                    relations: RelationDict) -> dict:
    """Nested {v1: {v2: set(v3)}} with values per the order's kinds."""
    _check_spans(sentence)
    tree: dict = {}
    for t in sentence.triplets:
        v1, v2, v3 = order.values_of(t, relations)
        tree.setdefault(v1, {}).setdefault(v2, set()).add(v3)
    return tree


def _multihot(values, kind: str, n_tokens: int, n_relations: int) -> StepTargets:
    if kind == RELATION:
        rel = np.zeros(n_relations)
        for v in values:
            rel[v] = 1.0
        return StepTargets(RELATION, relations=rel)
    begins = np.zeros(n_tokens)
    ends = np.zeros(n_tokens)
    for b, e in values:
        begins[b] = 1.0
        ends[e] = 1.0
    return StepTargets("entity", begins=begins, ends=ends)


def expand_training_examples(sentence: Sentence, order: DecodeOrder,
                             relations: RelationDict
                             ) -> list[tuple[tuple[PrefixItem, ...], StepTargets]]:
    """One example per internal tree node, in canonical (sorted) order.

    The root targets the set of all depth-1 values; each depth-1 value
    targets its depth-2 continuations; each (d1, d2) pair targets its
    depth-3 set. Entity target sets pool all gold begins in one multi-hot
    vector and all gold ends in the other.
    """
    if not sentence.triplets:
        raise ValueError("cannot expand a sentence with no gold triplets")
    tree = build_gold_tree(sentence, order, relations)
    n = len(sentence.tokens)
    r = len(relations)
    kinds = order.kinds
    sos = PrefixItem.sos()

    examples = [((sos,), _multihot(tree.keys(), kinds[0], n, r))]
    for v1 in sorted(tree):
        item1 = _item_for(kinds[0], v1)
        examples.append(((sos, item1), _multihot(tree[v1].keys(), kinds[1], n, r)))
        for v2 in sorted(tree[v1]):
            item2 = _item_for(kinds[1], v2)
            examples.append(
                ((sos, item1, item2), _multihot(tree[v1][v2], kinds[2], n, r)))
    return examples


# ---------------------------------------------------------------------------
# Span decoding
# ---------------------------------------------------------------------------

def decode_spans(prob_begin: np.ndarray, prob_end: np.ndarray, threshold: float,
                 max_span_len: int = 10) -> list[tuple[int, int]]:
    """Pair each begin position at/above threshold with the nearest qualifying
    end within max_span_len; begins without one emit nothing."""
    if prob_begin.shape != prob_end.shape:
        raise ValueError(
            f"begin/end vectors disagree: {prob_begin.shape} vs {prob_end.shape}")
    n = prob_begin.shape[0]
    spans = []
    for b in range(n):
        if prob_begin[b] < threshold:
            continue
        for e in range(b, min(b + max_span_len, n)):
            if prob_end[e] >= threshold:
                spans.append((b, e))
                break
    return spans


# ---------------------------------------------------------------------------
# The model
# ---------------------------------------------------------------------------

class TreeModel:
    """Encoder plus tree decoder with relation and begin/end entity heads."""

    def __init__(self, vocab: Vocab, relations: RelationDict,
                 order: DecodeOrder | str = "rth", emb_dim: int = 200,
                 hidden: int = 200, threshold: float = 0.5,
                 max_span_len: int = 10, limits: DecodeLimits | None = None,
                 max_len: int = 100, truncate: bool = False,
                 joiner: str = " ", seed: int = 0):
        self.vocab = vocab
        self.relations = relations
        self.order = order if isinstance(order, DecodeOrder) else DecodeOrder(order)
        self.threshold = threshold
        self.max_span_len = max_span_len
        self.limits = limits or DecodeLimits()
        self.joiner = joiner
        self.hidden = hidden

        rng = np.random.default_rng(seed)
        self.encoder = Encoder(rng, len(vocab), emb_dim, hidden,
                               max_len=max_len, truncate=truncate)
        self.dec_lstm = Lstm(rng, hidden, hidden)
        self.W_att = Tensor(uniform_init(rng, hidden, (hidden, hidden)),
                            requires_grad=True)
        self.conv_de = Conv1d(rng, DEC_CONV_WIDTH, 2 * hidden, hidden)
        self.sos_embedding = Tensor(rng.standard_normal(hidden), requires_grad=True)
        self.rel_embedding = Tensor(rng.standard_normal((len(relations), hidden)),
                                    requires_grad=True)
        self.W_r = Tensor(uniform_init(rng, hidden, (hidden, len(relations))),
                          requires_grad=True)
        self.b_r = Tensor(np.zeros(len(relations)), requires_grad=True)
        self.w_begin = Tensor(uniform_init(rng, hidden, (hidden,)), requires_grad=True)
        self.b_begin = Tensor(np.zeros(()), requires_grad=True)
        self.w_end = Tensor(uniform_init(rng, hidden, (hidden,)), requires_grad=True)
        self.b_end = Tensor(np.zeros(()), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        params = self.encoder.parameters()
        params.update(self.dec_lstm.named("decoder.lstm"))
        params["decoder.W_att"] = self.W_att
        params.update(self.conv_de.named("decoder.conv_de"))
        params["decoder.sos_embedding"] = self.sos_embedding
        params["decoder.rel_embedding"] = self.rel_embedding
        params["decoder.rel_head.W"] = self.W_r
        params["decoder.rel_head.b"] = self.b_r
        params["decoder.begin_head.w"] = self.w_begin
        params["decoder.begin_head.b"] = self.b_begin
        params["decoder.end_head.w"] = self.w_end
        params["decoder.end_head.b"] = self.b_end
        return params

    # -- single-step machinery ------------------------------------------------

    def step_input_embedding(self, item: PrefixItem, parent_scratchpad: Tensor) -> Tensor:
        if item.kind == "sos":
            return self.sos_embedding
        if item.kind == "relation":
            return ad.take_row(self.rel_embedding, item.relation_id)
        begin, end = item.span
        n = parent_scratchpad.shape[0]
        if not (0 <= begin <= end < n):
            raise ValueError(f"entity span [{begin}, {end}] out of range for {n} rows")
        return ad.take_row(parent_scratchpad, begin) + ad.take_row(parent_scratchpad, end)

    def decode_step(self, state: tuple[Tensor, Tensor], scratchpad: Tensor,
                    w: Tensor) -> tuple[tuple[Tensor, Tensor], Tensor, Tensor]:
        """One decoder step: recur, attend over the old scratchpad with a
        multiplicative score, rewrite the scratchpad, return pooled context."""
        h, c = self.dec_lstm.step(w, *state)
        query = ad.matmul(self.W_att, h)
        weights = ad.softmax_over(ad.matmul(scratchpad, query), axis=-1)
        context = ad.matmul(weights, scratchpad)
        n = scratchpad.shape[0]
        stacked = ad.concat([ad.tile_row(context, n), scratchpad], axis=1)
        # the nonlinearity lets the broadcast context interact with each
        # position's local features instead of shifting every logit equally
        new_scratchpad = ad.tanh(self.conv_de(stacked))
        return (h, c), new_scratchpad, context

    def relation_head(self, scratchpad: Tensor) -> Tensor:
        return ad.sigmoid(ad.max_over_sequence(
            ad.matmul(scratchpad, self.W_r) + self.b_r))

    def entity_head(self, scratchpad: Tensor) -> tuple[Tensor, Tensor]:
        begins = ad.sigmoid(ad.matmul(scratchpad, self.w_begin) + self.b_begin)
        ends = ad.sigmoid(ad.matmul(scratchpad, self.w_end) + self.b_end)
        return begins, ends

    def _root(self, enc: EncoderOutput) -> DecodePath:
        c0 = Tensor(np.zeros(self.hidden))
        return DecodePath(depth=0, items=(PrefixItem.sos(),),
                          state=(enc.final_state, c0), scratchpad=enc.scratchpad0)

    def _advance(self, path: DecodePath) -> tuple[tuple[Tensor, Tensor], Tensor]:
        w = self.step_input_embedding(path.items[-1], path.scratchpad)
        state, scratchpad, _ = self.decode_step(path.state, path.scratchpad, w)
        return state, scratchpad

    def _step_loss(self, scratchpad: Tensor, targets: StepTargets) -> Tensor:
        if targets.kind == RELATION:
            return ad.bce_sum(self.relation_head(scratchpad), targets.relations)
        begins, ends = self.entity_head(scratchpad)
        return ad.bce_sum(begins, targets.begins) + ad.bce_sum(ends, targets.ends)

    # -- training -------------------------------------------------------------

    def loss(self, sentence: Sentence) -> Tensor:
        """Teacher-forced tree-expansion loss: binary cross-entropy summed over
        every internal node of the gold tree, walked in canonical order so the
        result is bitwise independent of the gold triplet list's order."""
        if not sentence.triplets:
            raise ValueError("cannot compute a tree-expansion loss without gold triplets")
        tree = build_gold_tree(sentence, self.order, self.relations)
        n = len(sentence.tokens)
        r = len(self.relations)
        kinds = self.order.kinds
        enc = self.encoder.encode(self.vocab.encode(sentence.tokens))
        root = self._root(enc)

        state1, sp1 = self._advance(root)
        total = self._step_loss(sp1, _multihot(tree.keys(), kinds[0], n, r))
        for v1 in sorted(tree):
            path1 = DecodePath(1, (*root.items, _item_for(kinds[0], v1)), state1, sp1)
            state2, sp2 = self._advance(path1)
            total = total + self._step_loss(
                sp2, _multihot(tree[v1].keys(), kinds[1], n, r))
            for v2 in sorted(tree[v1]):
                path2 = DecodePath(2, (*path1.items, _item_for(kinds[1], v2)),
                                   state2, sp2)
                state3, sp3 = self._advance(path2)
                total = total + self._step_loss(
                    sp3, _multihot(tree[v1][v2], kinds[2], n, r))
        return total

    # -- autoregressive tree decoding ------------------------------------------

    def _predict_values(self, scratchpad: Tensor, depth: int) -> list:
        """Thresholded predictions at a depth, capped by fan-out, in canonical order."""
        kind = self.order.kinds[depth - 1]
        cap = self.limits.cap(depth)
        if kind == RELATION:
            probs = self.relation_head(scratchpad).data
            picked = [rid for rid in range(probs.shape[0]) if probs[rid] >= self.threshold]
            if cap and len(picked) > cap:
                picked = sorted(picked, key=lambda rid: (-probs[rid], rid))[:cap]
            return sorted(picked)
        begins, ends = self.entity_head(scratchpad)
        spans = decode_spans(begins.data, ends.data, self.threshold, self.max_span_len)
        if cap and len(spans) > cap:
            score = lambda s: begins.data[s[0]] * ends.data[s[1]]
            spans = sorted(spans, key=lambda s: (-score(s), s))[:cap]
        return sorted(spans)

    def decode_tree(self, sentence: Sentence,
                    stats: DecodeStats | None = None) -> set[Triplet]:
        """Breadth-wise expansion: every prediction at a layer forks its own
        child path (inheriting this path's state and scratchpad) and recurses;
        complete depth-3 paths emit triplets, deduplicated into a set."""
        with ad.no_grad():
            enc = self.encoder.encode(self.vocab.encode(sentence.tokens))
            found: set[tuple] = set()
            pending = [self._root(enc)]
            while pending:
                path = pending.pop()
                state, scratchpad = self._advance(path)
                depth = path.depth + 1
                steps = path.steps_taken + 1
                if stats is not None:
                    stats.paths_expanded += 1
                for value in self._predict_values(scratchpad, depth):
                    if depth == 3:
                        assert steps == 3, "triplet emitted off a non-depth-3 path"
                        found.add(self._values_of_path(path) + (value,))
                        if stats is not None:
                            stats.steps_per_triplet.append(steps)
                    else:
                        pending.append(DecodePath(
                            depth, (*path.items, _item_for(self.order.kinds[depth - 1], value)),
                            state, scratchpad, steps_taken=steps))
        return {
            self.order.triplet_of(vals, self.relations, sentence.tokens, self.joiner)
            for vals in found
        }

    def _values_of_path(self, path: DecodePath) -> tuple:
        values = []
        for item, kind in zip(path.items[1:], self.order.kinds):
            values.append(item.relation_id if kind == RELATION else item.span)
        return tuple(values)

    # trainer-facing alias shared with the flat baseline
    def predict(self, sentence: Sentence) -> set[Triplet]:
        return self.decode_tree(sentence)
