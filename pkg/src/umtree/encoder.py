"""Sentence encoder: embeddings, bidirectional recurrence, and the initial
scratchpad memory the decoder will rewrite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Conv1d, Linear, Lstm

CONV_WIDTH = 3


class SentenceTooLong(ValueError):
    pass


@dataclass
class EncoderOutput:
    states: Tensor       # [n, h]
    scratchpad0: Tensor  # [n, h]
    final_state: Tensor  # [h]


class Encoder:
    """Embeds tokens, runs forward+backward recurrences, projects the
    concatenated 2h states down to h, then convolves them into the initial
    scratchpad (same length, same width)."""

    def __init__(self, rng: np.random.Generator, vocab_size: int, emb_dim: int,
                 hidden: int, max_len: int = 100, truncate: bool = False):
        self.hidden = hidden
        self.max_len = max_len
        self.truncate = truncate
        self.embedding = Tensor(rng.standard_normal((vocab_size, emb_dim)),
                                requires_grad=True)
        self.lstm_fwd = Lstm(rng, emb_dim, hidden)
        self.lstm_bwd = Lstm(rng, emb_dim, hidden)
        self.proj = Linear(rng, 2 * hidden, hidden)
        self.conv_en = Conv1d(rng, CONV_WIDTH, hidden, hidden)

    def parameters(self) -> dict[str, Tensor]:
        params = {"encoder.embedding": self.embedding}
        params.update(self.lstm_fwd.named("encoder.lstm_fwd"))
        params.update(self.lstm_bwd.named("encoder.lstm_bwd"))
        params.update(self.proj.named("encoder.proj"))
        params.update(self.conv_en.named("encoder.conv_en"))
        return params

    def embed(self, token_ids: list[int]) -> Tensor:
        return ad.gather_rows(self.embedding, token_ids)

    def _clip_length(self, token_ids: list[int]) -> list[int]:
        if not token_ids:
            raise ValueError("cannot encode an empty sentence")
        if len(token_ids) > self.max_len:
            if not self.truncate:
                raise SentenceTooLong(
                    f"sentence length {len(token_ids)} exceeds max_len {self.max_len} "
                    "and truncation is disabled")
            token_ids = token_ids[:self.max_len]
        return token_ids

    def directional_states(self, token_ids: list[int]) -> tuple[Tensor, Tensor]:
        token_ids = self._clip_length(token_ids)
        emb = self.embed(token_ids)
        n = len(token_ids)
        rows = [ad.take_row(emb, i) for i in range(n)]

        h, c = self.lstm_fwd.zero_state()
        fwd = []
        for i in range(n):
            h, c = self.lstm_fwd.step(rows[i], h, c)
            fwd.append(h)
        h, c = self.lstm_bwd.zero_state()
        bwd = [None] * n
        for i in reversed(range(n)):
            h, c = self.lstm_bwd.step(rows[i], h, c)
            bwd[i] = h
        return ad.stack_rows(fwd), ad.stack_rows(bwd)

    def encode(self, token_ids: list[int]) -> EncoderOutput:
        # tanh keeps scratchpad values bounded across repeated decoder rewrites
        fwd, bwd = self.directional_states(token_ids)
        states = self.proj(ad.concat([fwd, bwd], axis=1))
        scratchpad0 = ad.tanh(self.conv_en(states))
        final_state = ad.take_row(states, states.shape[0] - 1)
        return EncoderOutput(states=states, scratchpad0=scratchpad0,
                             final_state=final_state)
