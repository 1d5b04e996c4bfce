"""The full finite-difference suite: every differentiable op, then the whole
model loss, checked against central differences."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import EntitySpan, RelationDict, Sentence, Triplet
from .decoder import TreeModel
from .gradcheck import check_gradients, max_error
from .vocab import Vocab

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


def _rand(rng, *shape) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, shape), requires_grad=True)


def op_checks(seed: int = 0) -> dict[str, float]:
    """Max relative FD error per op on random inputs in [-1, 1]."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    def run(name, loss_fn, params):
        results[name] = max_error(check_gradients(loss_fn, params))

    a, b = _rand(rng, 4, 5), _rand(rng, 5, 6)
    run("matmul", lambda: ad.sum_all(ad.matmul(a, b)), {"a": a, "b": b})

    x, y = _rand(rng, 3, 4), _rand(rng, 3, 4)
    run("add", lambda: ad.sum_all(ad.add(x, y)), {"x": x, "y": y})
    run("sub", lambda: ad.sum_all(ad.sub(x, y)), {"x": x, "y": y})
    run("mul", lambda: ad.sum_all(ad.mul(x, y)), {"x": x, "y": y})

    v = _rand(rng, 6)
    run("sigmoid", lambda: ad.sum_all(ad.sigmoid(v)), {"v": v})
    run("tanh", lambda: ad.sum_all(ad.tanh(v)), {"v": v})
    run("exp", lambda: ad.sum_all(ad.exp(v)), {"v": v})

    pos = Tensor(rng.uniform(0.2, 1.0, 6), requires_grad=True)
    run("log", lambda: ad.sum_all(ad.log(pos)), {"v": pos})

    m = _rand(rng, 5, 3)
    run("softmax_over",
        lambda: ad.sum_all(ad.mul(ad.softmax_over(m, axis=1),
                                  Tensor(np.arange(15.0).reshape(5, 3)))),
        {"m": m})
    run("max_over_sequence",
        lambda: ad.sum_all(ad.sigmoid(ad.max_over_sequence(m))), {"m": m})

    h = 8
    lstm = {"x": _rand(rng, h), "h0": _rand(rng, h), "c0": _rand(rng, h),
            "w_ih": _rand(rng, h, 4 * h), "w_hh": _rand(rng, h, 4 * h),
            "b": _rand(rng, 4 * h)}
    probe = Tensor(rng.uniform(-1, 1, h))

    def lstm_loss():
        hn, cn = ad.lstm_cell(lstm["x"], lstm["h0"], lstm["c0"],
                              lstm["w_ih"], lstm["w_hh"], lstm["b"])
        return ad.matmul(hn, probe) + ad.matmul(cn, probe)

    run("lstm_cell", lstm_loss, lstm)

    seq, kern, bias = _rand(rng, 6, 4), _rand(rng, 3, 4, 5), _rand(rng, 5)
    run("conv1d_same", lambda: ad.sum_all(ad.conv1d_same(seq, kern, bias)),
        {"seq": seq, "kern": kern, "bias": bias})

    table, tiled = _rand(rng, 6, 3), _rand(rng, 3)
    mix4 = Tensor(rng.normal(size=(4, 3)))
    mix2 = Tensor(rng.normal(size=(2, 3)))
    run("gather_rows", lambda: ad.sum_all(ad.mul(
        ad.gather_rows(table, [0, 2, 2, 5]), ad.gather_rows(table, [0, 2, 2, 5]))),
        {"table": table})
    run("tile_row", lambda: ad.sum_all(ad.mul(ad.tile_row(tiled, 4), mix4)),
        {"v": tiled})
    run("take_row", lambda: ad.sum_all(ad.mul(ad.take_row(table, 2),
                                              ad.take_row(table, 2))),
        {"table": table})
    run("concat", lambda: ad.sum_all(ad.mul(ad.concat([x, y], axis=1),
                                            ad.concat([y, x], axis=1))),
        {"x": x, "y": y})
    run("stack_rows", lambda: ad.sum_all(ad.mul(ad.stack_rows([tiled, tiled]), mix2)),
        {"v": tiled})

    z = _rand(rng, 7)
    targets = (rng.uniform(size=7) > 0.5).astype(float)
    run("bce_sum", lambda: ad.bce_sum(ad.sigmoid(z), targets), {"z": z})
    logits = _rand(rng, 9)
    run("ce_logits", lambda: ad.ce_logits(logits, 3), {"logits": logits})

    cl = _rand(rng, 6)
    run("clip", lambda: ad.sum_all(ad.mul(ad.clip(cl, -0.5, 0.5), cl)), {"v": cl})

    return results


def model_sentence() -> tuple[Sentence, Vocab, RelationDict]:
    tokens = ["aa", "bb", "cc"]
    sentence = Sentence("aa bb cc", tokens, [
        Triplet(EntitySpan(0, 0, "aa"), "r0", EntitySpan(2, 2, "cc")),
        Triplet(EntitySpan(1, 1, "bb"), "r1", EntitySpan(0, 0, "aa")),
    ])
    vocab = Vocab.build([sentence])
    return sentence, vocab, RelationDict(["r0", "r1"])


def model_check(seed: int = 0, order: str = "rth") -> float:
    """Max relative FD error over every parameter of the full training loss
    on a 3-token synthetic sentence."""
    sentence, vocab, relations = model_sentence()
    model = TreeModel(vocab, relations, order=order, emb_dim=6, hidden=8, seed=seed)
    errs = check_gradients(lambda: model.loss(sentence), model.parameters())
    return max_error(errs)


def run_suite(seed: int = 0) -> tuple[dict[str, float], float, bool]:
    """(per-op errors, full-model error, all under tolerance)."""
    ops = op_checks(seed)
    model_err = model_check(seed)
    ok = max(ops.values()) < OP_TOLERANCE and model_err < MODEL_TOLERANCE
    return ops, model_err, ok
