"""Decoupled-weight-decay adaptive-moment optimizer (AdamW) over named parameters.

Parameters and gradients travel as dicts of float64 ndarrays keyed by name;
the state owns one first/second moment buffer per parameter.  Updates are
fully deterministic: same inputs produce bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NumericError


@dataclass
class OptimizerState:
    learning_rate: float = 1e-3
    decay: float = 1e-2
    beta_pair: tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """One in-place AdamW step on every parameter present in ``grads``.

    Decay is decoupled (applied directly to the parameter, not the gradient);
    moment estimates are bias-corrected.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta_pair
    lr = state.learning_rate
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name in params:
        if name not in grads:
            continue
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape mismatch for {name!r}", g.shape, p.shape)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.decay != 0.0:
            p *= 1.0 - lr * state.decay
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
