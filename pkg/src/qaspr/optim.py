"""Parameter storage and the Adam update."""

from __future__ import annotations

from typing import Mapping

import numpy as np


class ParamStore:
    """Named float64 tensors with gradient slots and Adam moments."""

    def __init__(self, params: Mapping[str, np.ndarray]):
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.t = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def accumulate(self, grads: Mapping[str, np.ndarray], weight: float = 1.0) -> None:
        for name, g in grads.items():
            if name in self.grads:
                self.grads[name] += weight * g

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
    frozen: frozenset[str] = frozenset(),
) -> None:
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam_step: non-finite gradient in {name!r}")
    store.t += 1
    bc1 = 1.0 - beta1**store.t
    bc2 = 1.0 - beta2**store.t
    for name, p in store.params.items():
        if name in frozen:
            continue
        g = store.grads[name]
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + epsilon)
    store.zero_grad()
