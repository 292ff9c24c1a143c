"""Central finite-difference checking of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

# (loss, {name: grad}) for the current contents of the parameter arrays
Closure = Callable[[], tuple[float, Mapping[str, np.ndarray]]]


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    max_abs_error: dict[str, float]
    n_coords: int

    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tolerance: float) -> bool:
        return self.worst() < tolerance

    def to_json(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "max_abs_error": self.max_abs_error,
            "n_coords": self.n_coords,
            "worst": self.worst(),
        }


def grad_check(
    closure: Closure,
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients with central differences, coordinate by coordinate.

    ``params`` arrays are perturbed in place and restored. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps round-off on
    near-zero gradients from dominating.
    """
    _, analytic = closure()
    analytic = {k: np.array(v, copy=True) for k, v in analytic.items()}
    rel: dict[str, float] = {}
    absolute: dict[str, float] = {}
    n = 0
    for name, arr in params.items():
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = closure()
            flat[i] = orig - step
            down, _ = closure()
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * step)
        n += flat.size
        a = analytic.get(name, np.zeros_like(arr))
        err = np.abs(a - numeric)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        rel[name] = float((err / denom).max()) if err.size else 0.0
        absolute[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(rel, absolute, n)
