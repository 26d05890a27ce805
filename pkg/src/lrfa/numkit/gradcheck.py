"""Central-difference verification of analytic gradients.

The loss callable receives a dict of named parameter arrays and returns
``(value, grads)`` where grads mirrors the parameter dict.  The checker probes
every coordinate with a symmetric step and reports the worst relative error

    |analytic - numeric| / max(1, |analytic|, |numeric|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import NumericError, ParameterError

LossFn = Callable[[dict], tuple[float, dict]]


@dataclass
class GradCheckReport:
    max_relative_error: float
    argmax_parameter: str
    argmax_coordinate: tuple[int, int]
    analytic_norm: float
    numeric_norm: float


def grad_check(loss: LossFn, params: dict[str, np.ndarray], step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients of ``loss`` against central differences."""
    if step <= 0.0:
        raise ParameterError(f"step must be > 0, got {step}")
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    base_value, analytic = loss(work)
    if not math.isfinite(base_value):
        raise NumericError("loss is non-finite at the base point")

    worst = 0.0
    worst_param = ""
    worst_coord = (0, 0)
    sq_a = 0.0
    sq_n = 0.0
    for name, p in work.items():
        grad_a = np.asarray(analytic[name], dtype=np.float64)
        flat = p.reshape(-1)
        ga_flat = grad_a.reshape(-1)
        cols = p.shape[1] if p.ndim == 2 else 1
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up, _ = loss(work)
            flat[i] = orig - step
            down, _ = loss(work)
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError(f"loss non-finite while probing {name!r}[{i}]")
            numeric = (up - down) / (2.0 * step)
            a = float(ga_flat[i])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            sq_a += a * a
            sq_n += numeric * numeric
            if rel > worst:
                worst = rel
                worst_param = name
                worst_coord = (i // cols, i % cols)
    return GradCheckReport(
        max_relative_error=worst,
        argmax_parameter=worst_param,
        argmax_coordinate=worst_coord,
        analytic_norm=math.sqrt(sq_a),
        numeric_norm=math.sqrt(sq_n),
    )
