"""Parameter bundles shared by the encoder and both decoders."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, conv1d_same, lstm_cell, matmul


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, shape)


class Lstm:
    """One recurrent cell; forget-gate bias starts at 1."""

    def __init__(self, rng: np.random.Generator, input_dim: int, hidden: int):
        self.hidden = hidden
        self.W_ih = Tensor(uniform_init(rng, input_dim, (input_dim, 4 * hidden)),
                           requires_grad=True)
        self.W_hh = Tensor(uniform_init(rng, hidden, (hidden, 4 * hidden)),
                           requires_grad=True)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        self.b = Tensor(b, requires_grad=True)

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return lstm_cell(x, h, c, self.W_ih, self.W_hh, self.b)

    def zero_state(self) -> tuple[Tensor, Tensor]:
        return Tensor(np.zeros(self.hidden)), Tensor(np.zeros(self.hidden))

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W_ih": self.W_ih, f"{prefix}.W_hh": self.W_hh,
                f"{prefix}.b": self.b}


class Conv1d:
    def __init__(self, rng: np.random.Generator, width: int, d_in: int, d_out: int):
        self.K = Tensor(uniform_init(rng, width * d_in, (width, d_in, d_out)),
                        requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, seq: Tensor) -> Tensor:
        return conv1d_same(seq, self.K, self.b)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.K": self.K, f"{prefix}.b": self.b}


class Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.W = Tensor(uniform_init(rng, d_in, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.W) + self.b

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}
