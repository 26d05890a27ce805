"""Plain-array elementary operations with the library's error contracts.

These are the non-differentiating twins of the tape primitives: they take and
return float64 ndarrays and validate their inputs eagerly.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, DimensionError, DistributionError, NumericError, ParameterError

KL_FLOOR = 1e-12


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D float64 matrix: finite entries, row-major contiguity."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D", arr.shape, None)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape contract."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul inner dimensions differ", a.shape, b.shape)
    return a @ b


def cosine_rows(x, y) -> np.ndarray:
    """Cosine similarity between every row of x and every row of y."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise DimensionError("cosine_rows operands have different widths", x.shape, y.shape)
    xn = np.linalg.norm(x, axis=1)
    yn = np.linalg.norm(y, axis=1)
    for name, norms in (("x", xn), ("y", yn)):
        zero = np.where(norms == 0.0)[0]
        if zero.size:
            raise DegenerateInputError(f"zero-norm row {int(zero[0])} in {name}")
    sim = (x / xn[:, None]) @ (y / yn[:, None]).T
    return np.clip(sim, -1.0, 1.0)


def softmax_row(v, temperature: float) -> np.ndarray:
    """Stable softmax of a vector at the given temperature."""
    if temperature <= 0.0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    v = np.asarray(v, dtype=np.float64)
    z = (v - v.max()) / temperature
    e = np.exp(z)
    return e / e.sum()


def kl_divergence(p, q) -> float:
    """KL(p || q) for probability vectors, with q floored at KL_FLOOR."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DistributionError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0.0):
            raise DistributionError(f"{name} has negative entries")
        if abs(vec.sum() - 1.0) > 1e-6:
            raise DistributionError(f"{name} does not sum to 1 (sum={vec.sum()!r})")
    qf = np.maximum(q, KL_FLOOR)
    terms = np.where(p > 0.0, p * (np.log(np.maximum(p, KL_FLOOR)) - np.log(qf)), 0.0)
    return float(terms.sum())
