"""Central finite-difference gradient checking against the analytic backward pass."""

from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward


def relative_error(a: float, n: float) -> float:
    """|a - n| scaled by max(1, |a|, |n|): relative for large gradients,
    absolute for small ones."""
    return abs(a - n) / max(1.0, abs(a), abs(n))


def check_gradients(loss_fn: Callable[[], Tensor],
                    params: Mapping[str, Tensor],
                    eps: float = 1e-5) -> dict[str, float]:
    """Compare analytic gradients of loss_fn against central differences.

    loss_fn must rebuild the forward graph from the current parameter values
    on every call. Returns the max relative error per parameter.
    """
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = {}
    for name, p in params.items():
        analytic[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        p.zero_grad()

    errs: dict[str, float] = {}
    for name, p in params.items():
        worst = 0.0
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().data)
            flat[i] = orig - eps
            down = float(loss_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            worst = max(worst, relative_error(analytic[name].reshape(-1)[i], numeric))
        errs[name] = worst
    return errs


def max_error(errs: Mapping[str, float]) -> float:
    return max(errs.values()) if errs else 0.0
