"""Ordered flattened-sequence baseline decoder.

Triplets are serialized in a canonical (alphabetical) order into one long
token sequence -- head tokens, separator, relation, separator, tail tokens,
separator, per triplet -- and decoded greedily token by token. Deliberately
simple: it exists to expose how much an imposed output order costs when the
test-time triplet combinations differ from the training ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import EntitySpan, RelationDict, Sentence, Triplet
from .encoder import Encoder
from .layers import Linear, Lstm, uniform_init
from .vocab import Vocab

SEP, EOS = "<sep>", "<eos>"


class TargetTooLong(ValueError):
    pass


class OutputVocab:
    """Symbols the flat decoder can emit: separators, relations, word tokens."""

    PAD_ID, UNK_ID, EOS_ID, SEP_ID = 0, 1, 2, 3

    def __init__(self, relations: RelationDict, word_tokens: list[str]):
        reserved = ["<pad>", "<unk>", EOS, SEP]
        self.symbols = reserved + list(relations.names) + [
            t for t in word_tokens if t not in relations.ids]
        self.index = {s: i for i, s in enumerate(self.symbols)}
        self.relation_ids = {self.index[name] for name in relations.names}

    def __len__(self) -> int:
        return len(self.symbols)

    def id(self, symbol: str) -> int:
        return self.index.get(symbol, self.UNK_ID)

    def symbol(self, i: int) -> str:
        return self.symbols[i]

    @classmethod
    def build(cls, train_sentences, relations: RelationDict) -> "OutputVocab":
        seen = sorted({tok for s in train_sentences for tok in s.tokens})
        return cls(relations, seen)


def canonical_triplets(triplets: list[Triplet]) -> list[Triplet]:
    return sorted(triplets, key=lambda t: (t.head.text, t.relation, t.tail.text))


def serialize_triplets(triplets: list[Triplet], joiner: str = " ") -> list[str]:
    """Flatten triplets (in the given order) into the target token sequence."""
    out: list[str] = []
    for t in triplets:
        out.extend(t.head.text.split(joiner) if joiner else list(t.head.text))
        out.append(SEP)
        out.append(t.relation)
        out.append(SEP)
        out.extend(t.tail.text.split(joiner) if joiner else list(t.tail.text))
        out.append(SEP)
    out.append(EOS)
    return out


def flatten_target(sentence: Sentence, max_decode_len: int = 50,
                   joiner: str = " ") -> list[str]:
    """Canonically ordered target sequence; too-long sentences are flagged."""
    if not sentence.triplets:
        raise ValueError("cannot flatten a sentence with no triplets")
    tokens = serialize_triplets(canonical_triplets(sentence.triplets), joiner)
    if len(tokens) > max_decode_len:
        raise TargetTooLong(
            f"flattened target of {len(tokens)} tokens exceeds "
            f"max_decode_len {max_decode_len}")
    return tokens


@dataclass
class FlatDecodeStats:
    emitted_tokens: int = 0
    malformed_blocks: int = 0


class FlatModel:
    """Encoder shared in architecture with the tree model, one recurrent
    decoder with attention over the encoder states, softmax over the output
    vocabulary, greedy decoding."""

    def __init__(self, vocab: Vocab, relations: RelationDict,
                 out_vocab: OutputVocab, emb_dim: int = 200, hidden: int = 200,
                 max_decode_len: int = 50, max_len: int = 100,
                 truncate: bool = False, joiner: str = " ", seed: int = 0):
        self.vocab = vocab
        self.relations = relations
        self.out_vocab = out_vocab
        self.max_decode_len = max_decode_len
        self.joiner = joiner
        self.hidden = hidden

        rng = np.random.default_rng(seed)
        self.encoder = Encoder(rng, len(vocab), emb_dim, hidden,
                               max_len=max_len, truncate=truncate)
        self.out_embedding = Tensor(rng.standard_normal((len(out_vocab), hidden)),
                                    requires_grad=True)
        self.sos_embedding = Tensor(rng.standard_normal(hidden), requires_grad=True)
        self.dec_lstm = Lstm(rng, hidden, hidden)
        self.W_att = Tensor(uniform_init(rng, hidden, (hidden, hidden)),
                            requires_grad=True)
        self.out_layer = Linear(rng, 2 * hidden, len(out_vocab))

    def parameters(self) -> dict[str, Tensor]:
        params = self.encoder.parameters()
        params["flat.out_embedding"] = self.out_embedding
        params["flat.sos_embedding"] = self.sos_embedding
        params.update(self.dec_lstm.named("flat.lstm"))
        params["flat.W_att"] = self.W_att
        params.update(self.out_layer.named("flat.out_layer"))
        return params

    def _logits(self, states: Tensor, state, prev_emb: Tensor):
        h, c = self.dec_lstm.step(prev_emb, *state)
        query = ad.matmul(self.W_att, h)
        weights = ad.softmax_over(ad.matmul(states, query), axis=-1)
        context = ad.matmul(weights, states)
        logits = self.out_layer(ad.concat([h, context], axis=0))
        return (h, c), logits

    def _loss_for_tokens(self, sentence: Sentence, target_tokens: list[str]) -> Tensor:
        enc = self.encoder.encode(self.vocab.encode(sentence.tokens))
        target_ids = [self.out_vocab.id(t) for t in target_tokens]
        state = (enc.final_state, Tensor(np.zeros(self.hidden)))
        prev = self.sos_embedding
        total = None
        for tid in target_ids:
            state, logits = self._logits(enc.states, state, prev)
            step = ad.ce_logits(logits, tid)
            total = step if total is None else total + step
            prev = ad.take_row(self.out_embedding, tid)
        return total

    def loss(self, sentence: Sentence) -> Tensor:
        """Teacher-forced cross-entropy over the canonically flattened target."""
        return self._loss_for_tokens(
            sentence, flatten_target(sentence, self.max_decode_len, self.joiner))

    def usable(self, sentence: Sentence) -> bool:
        """Whether the sentence's flattened target fits the decoding budget."""
        try:
            flatten_target(sentence, self.max_decode_len, self.joiner)
            return True
        except TargetTooLong:
            return False

    def _greedy_ids(self, sentence: Sentence) -> list[int]:
        enc = self.encoder.encode(self.vocab.encode(sentence.tokens))
        state = (enc.final_state, Tensor(np.zeros(self.hidden)))
        prev = self.sos_embedding
        out: list[int] = []
        for _ in range(self.max_decode_len):
            state, logits = self._logits(enc.states, state, prev)
            nid = int(np.argmax(logits.data))
            if nid == OutputVocab.EOS_ID:
                break
            out.append(nid)
            prev = ad.take_row(self.out_embedding, nid)
        return out

    def _find_span(self, tokens: list[str], needle: list[str]) -> tuple[int, int] | None:
        for b in range(len(tokens) - len(needle) + 1):
            if tokens[b:b + len(needle)] == needle:
                return b, b + len(needle) - 1
        return None

    def _parse_blocks(self, sentence: Sentence, ids: list[int],
                      stats: FlatDecodeStats | None) -> set[Triplet]:
        fields: list[list[str]] = [[]]
        for i in ids:
            if i == OutputVocab.SEP_ID:
                fields.append([])
            else:
                fields[-1].append(self.out_vocab.symbol(i))
        if fields and not fields[-1]:
            fields.pop()
        found: set[Triplet] = set()
        for j in range(0, len(fields) - 2, 3):
            head_toks, rel_field, tail_toks = fields[j], fields[j + 1], fields[j + 2]
            malformed = (
                not head_toks or not tail_toks or len(rel_field) != 1
                or self.out_vocab.id(rel_field[0]) not in self.out_vocab.relation_ids)
            head_span = tail_span = None
            if not malformed:
                head_span = self._find_span(sentence.tokens, head_toks)
                tail_span = self._find_span(sentence.tokens, tail_toks)
                malformed = head_span is None or tail_span is None
            if malformed:
                if stats is not None:
                    stats.malformed_blocks += 1
                continue
            found.add(Triplet(
                EntitySpan(*head_span, self.joiner.join(head_toks)),
                rel_field[0],
                EntitySpan(*tail_span, self.joiner.join(tail_toks))))
        if len(fields) % 3 != 0 and stats is not None:
            stats.malformed_blocks += 1
        return found

    def decode_triplets(self, sentence: Sentence,
                        stats: FlatDecodeStats | None = None) -> set[Triplet]:
        """Greedy decode until EOS or budget, then parse blocks back into
        triplets; malformed blocks are dropped and counted, never raised."""
        with ad.no_grad():
            ids = self._greedy_ids(sentence)
        if stats is not None:
            stats.emitted_tokens += len(ids)
        return self._parse_blocks(sentence, ids, stats)

    # trainer-facing aliases shared with the tree model
    def predict(self, sentence: Sentence) -> set[Triplet]:
        return self.decode_triplets(sentence)
