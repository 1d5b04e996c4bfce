import random

import numpy as np
import pytest

from umtree.data import EntitySpan, RelationDict, Sentence, Triplet
from umtree.flat import (EOS, SEP, FlatDecodeStats, FlatModel, OutputVocab,
                         TargetTooLong, canonical_triplets, flatten_target,
                         serialize_triplets)
from umtree.vocab import Vocab


def span(b, e, tokens):
    return EntitySpan(b, e, " ".join(tokens[b:e + 1]))


def sentence(tokens, raw_triplets):
    toks = tokens.split()
    trips = [Triplet(span(hb, he, toks), rel, span(tb, te, toks))
             for (hb, he), rel, (tb, te) in raw_triplets]
    return Sentence(" ".join(toks), toks, trips)


@pytest.fixture
def rels():
    return RelationDict(["r0", "r1"])


def build_model(train_sentences, rels, **kwargs):
    vocab = Vocab.build(train_sentences)
    out_vocab = OutputVocab.build(train_sentences, rels)
    defaults = dict(emb_dim=10, hidden=12, seed=5)
    defaults.update(kwargs)
    return FlatModel(vocab, rels, out_vocab, **defaults)


class TestFlattenTarget:
    def test_single_triplet_layout(self):
        s = sentence("A x B", [((0, 0), "r", (2, 2))])
        assert flatten_target(s) == ["A", SEP, "r", SEP, "B", SEP, EOS]

    def test_alphabetical_canonical_order(self):
        s = sentence("B r C A", [((0, 0), "r0", (2, 2)), ((3, 3), "r0", (2, 2))])
        flat = flatten_target(s)
        assert flat == ["A", SEP, "r0", SEP, "C", SEP,
                        "B", SEP, "r0", SEP, "C", SEP, EOS]

    def test_canonical_sort_breaks_ties_on_relation_then_tail(self):
        s = sentence("A b C D", [((0, 0), "r1", (2, 2)), ((0, 0), "r0", (3, 3)),
                                 ((0, 0), "r0", (2, 2))])
        ordered = canonical_triplets(s.triplets)
        assert [(t.relation, t.tail.text) for t in ordered] == \
            [("r0", "C"), ("r0", "D"), ("r1", "C")]

    def test_overlong_target_flagged(self):
        tokens = " ".join(f"e{i}" for i in range(30))
        raw = [((i, i), "r0", (i + 1, i + 1)) for i in range(0, 20, 2)]
        s = sentence(tokens, raw)
        with pytest.raises(TargetTooLong):
            flatten_target(s, max_decode_len=50)

    def test_multi_token_entities_serialize_tokenwise(self):
        s = sentence("New York x B", [((0, 1), "r", (3, 3))])
        assert flatten_target(s) == ["New", "York", SEP, "r", SEP, "B", SEP, EOS]

    def test_serialization_preserves_given_order(self):
        s = sentence("B r C A", [((0, 0), "r0", (2, 2)), ((3, 3), "r0", (2, 2))])
        flat = serialize_triplets(list(reversed(canonical_triplets(s.triplets))))
        assert flat[0] == "B"


class TestOutputVocab:
    def test_reserved_then_relations_then_words(self, rels):
        ov = OutputVocab(rels, ["alpha", "beta"])
        assert ov.symbols[:4] == ["<pad>", "<unk>", EOS, SEP]
        assert ov.symbols[4:6] == ["r0", "r1"]
        assert ov.id("alpha") == 6
        assert ov.id("unseen") == OutputVocab.UNK_ID

    def test_relation_ids_identified(self, rels):
        ov = OutputVocab(rels, ["alpha"])
        assert {ov.symbol(i) for i in ov.relation_ids} == {"r0", "r1"}


class TestFlatModel:
    def test_loss_invariant_to_input_order_via_canonicalization(self, rels):
        s = sentence("A x B y C", [((0, 0), "r0", (2, 2)), ((4, 4), "r1", (0, 0))])
        model = build_model([s], rels)
        base = model.loss(s).item()
        s.triplets.reverse()
        assert model.loss(s).item() == base

    def test_loss_differs_for_non_canonical_serialization(self, rels):
        s = sentence("A x B y C", [((0, 0), "r0", (2, 2)), ((4, 4), "r1", (0, 0))])
        model = build_model([s], rels)
        canonical = model.loss(s).item()
        shuffled = serialize_triplets(list(reversed(canonical_triplets(s.triplets))))
        other = model._loss_for_tokens(s, shuffled).item()
        assert other != canonical

    def test_untrained_decode_never_crashes(self, rels):
        s = sentence("A x B", [((0, 0), "r0", (2, 2))])
        model = build_model([s], rels)
        stats = FlatDecodeStats()
        preds = model.decode_triplets(s, stats=stats)
        assert isinstance(preds, set)

    def test_usable_flags_overlong_sentences(self, rels):
        tokens = " ".join(f"e{i}" for i in range(30))
        raw = [((i, i), "r0", (i + 1, i + 1)) for i in range(0, 20, 2)]
        long_s = sentence(tokens, raw)
        short_s = sentence("A x B", [((0, 0), "r0", (2, 2))])
        model = build_model([short_s, long_s], rels, max_decode_len=20)
        assert model.usable(short_s) and not model.usable(long_s)

    def test_parse_blocks_drops_malformed(self, rels):
        s = sentence("A x B", [((0, 0), "r0", (2, 2))])
        model = build_model([s], rels)
        ov = model.out_vocab
        # well-formed block followed by a dangling field
        ids = [ov.id("A"), ov.SEP_ID, ov.id("r0"), ov.SEP_ID, ov.id("B"),
               ov.SEP_ID, ov.id("A")]
        stats = FlatDecodeStats()
        preds = model._parse_blocks(s, ids, stats)
        assert {t.surface() for t in preds} == {("A", "r0", "B")}
        assert stats.malformed_blocks == 1

    def test_parse_rejects_non_relation_middle_field(self, rels):
        s = sentence("A x B", [((0, 0), "r0", (2, 2))])
        model = build_model([s], rels)
        ov = model.out_vocab
        ids = [ov.id("A"), ov.SEP_ID, ov.id("x"), ov.SEP_ID, ov.id("B"), ov.SEP_ID]
        stats = FlatDecodeStats()
        assert model._parse_blocks(s, ids, stats) == set()
        assert stats.malformed_blocks == 1

    def test_parse_maps_entities_to_first_occurrence_spans(self, rels):
        s = sentence("A x B A", [((0, 0), "r0", (2, 2))])
        model = build_model([s], rels)
        ov = model.out_vocab
        ids = [ov.id("A"), ov.SEP_ID, ov.id("r0"), ov.SEP_ID, ov.id("B"), ov.SEP_ID]
        (triplet,) = model._parse_blocks(s, ids, None)
        assert (triplet.head.begin, triplet.head.end) == (0, 0)

    def test_entity_absent_from_sentence_dropped(self, rels):
        s = sentence("A x B", [((0, 0), "r0", (2, 2))])
        other = sentence("C x D", [((0, 0), "r0", (2, 2))])
        model = build_model([s, other], rels)
        ov = model.out_vocab
        ids = [ov.id("C"), ov.SEP_ID, ov.id("r0"), ov.SEP_ID, ov.id("B"), ov.SEP_ID]
        stats = FlatDecodeStats()
        assert model._parse_blocks(s, ids, stats) == set()
        assert stats.malformed_blocks == 1

    @pytest.mark.slow
    def test_overfit_reproduces_gold(self, rels):
        rng = random.Random(0)
        sentences = []
        for i in range(6):
            a, b = f"e{2 * i}", f"e{2 * i + 1}"
            rel = rng.choice(["r0", "r1"])
            sentences.append(sentence(f"{a} of {b}", [((0, 0), rel, (2, 2))]))
        model = build_model(sentences, rels, emb_dim=24, hidden=24)
        from umtree.data import Dataset
        from umtree.train import evaluate_model, train_model
        corpus = Dataset(sentences)
        train_model(model, corpus, epochs=150, batch_size=6, lr=5e-3, seed=0,
                    quiet=True)
        assert evaluate_model(model, corpus).f1 >= 0.99
