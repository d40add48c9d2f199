"""Central-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tape, Tensor


class NonDeterministicError(ValueError):
    """The checked function gave different outputs for identical parameters."""


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None
    n_checked: int
    per_param: dict[str, float] = field(default_factory=dict)


def relative_error(g_ad: float, g_fd: float) -> float:
    return abs(g_ad - g_fd) / max(abs(g_ad), abs(g_fd), 1e-6)


def grad_check(f: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-4,
               samples_per_param: int = 12, seed: int = 0) -> GradCheckResult:
    """Compare tape gradients of scalar ``f()`` with central differences.

    ``f`` takes no arguments and reads the tensors in ``params``, which are
    perturbed in place and restored. Up to ``samples_per_param`` coordinates
    are drawn per parameter.
    """
    if not 1e-4 <= h <= 1e-2:
        raise ValueError(f"step h={h} outside [1e-4, 1e-2]")
    rng = np.random.default_rng(seed)

    with Tape() as tape:
        loss = f()
    if loss.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    grads = tape.gradient(loss, params.values())
    base = float(loss.data)
    with Tape():
        again = float(f().data)
    if again != base:
        raise NonDeterministicError("function output changed between identical calls; disable dropout")

    result = GradCheckResult(0.0, None, 0)
    for (name, p), g in zip(params.items(), grads):
        flat = p.data.reshape(-1)
        n = flat.size
        idx = rng.choice(n, size=min(n, samples_per_param), replace=False)
        worst = 0.0
        for k in idx:
            old = flat[k]
            flat[k] = old + h
            up = float(f().data)
            flat[k] = old - h
            down = float(f().data)
            flat[k] = old
            fd = (up - down) / (2 * h)
            err = relative_error(float(g.reshape(-1)[k]), fd)
            result.n_checked += 1
            if err > worst:
                worst = err
            if err > result.max_rel_error:
                result.max_rel_error = err
                result.worst = (name, np.unravel_index(k, p.shape))
        result.per_param[name] = worst
    return result
