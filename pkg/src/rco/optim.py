"""Gradient-based parameter updates: plain SGD and Adam.

Both optimizers update parameter values in place from the accumulated
gradients and then zero the gradients, so one ``step()`` per backward pass
is the whole protocol.  A parameter group may carry its own learning rate.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Var


class Sgd:
    """W' = W - lr * dW."""

    def __init__(self, params: Sequence[Var], lr: float, groups: Sequence[tuple[Sequence[Var], float]] = ()):
        self._groups = [(list(params), float(lr))]
        self._groups += [(list(ps), float(glr)) for ps, glr in groups]

    def step(self) -> None:
        for params, lr in self._groups:
            for p in params:
                if p._grad is not None:
                    p.value = p.value - lr * p._grad
                p.zero_grad()


class Adam:
    """Adam with the published defaults (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(
        self,
        params: Sequence[Var],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        groups: Sequence[tuple[Sequence[Var], float]] = (),
    ):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._groups = [(list(params), float(lr))]
        self._groups += [(list(ps), float(glr)) for ps, glr in groups]
        self._m = {}
        self._v = {}
        self._t = 0
        for params_, _ in self._groups:
            for p in params_:
                self._m[id(p)] = np.zeros_like(p.value)
                self._v[id(p)] = np.zeros_like(p.value)

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self._t
        bc2 = 1.0 - b2**self._t
        for params, lr in self._groups:
            for p in params:
                g = p._grad if p._grad is not None else np.zeros_like(p.value)
                m = self._m[id(p)] = b1 * self._m[id(p)] + (1.0 - b1) * g
                v = self._v[id(p)] = b2 * self._v[id(p)] + (1.0 - b2) * g * g
                p.value = p.value - lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                p.zero_grad()


def make_optimizer(kind: str, params: Sequence[Var], lr: float, groups=()):
    if kind == "sgd":
        return Sgd(params, lr, groups=groups)
    if kind == "adam":
        return Adam(params, lr, groups=groups)
    raise ValueError(f"unknown optimizer {kind!r}")
