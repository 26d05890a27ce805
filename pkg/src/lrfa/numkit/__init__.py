"""Dense-matrix substrate: tape autodiff, elementary ops, optimizer, gradient checker."""

from . import tape
from .gradcheck import GradCheckReport, grad_check
from .ops import KL_FLOOR, as_matrix, cosine_rows, kl_divergence, matmul, softmax_row
from .optim import OptimizerState, optimizer_step

__all__ = [
    "tape",
    "GradCheckReport",
    "grad_check",
    "KL_FLOOR",
    "as_matrix",
    "cosine_rows",
    "kl_divergence",
    "matmul",
    "softmax_row",
    "OptimizerState",
    "optimizer_step",
]
