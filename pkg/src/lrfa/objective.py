"""Scalar objectives and score fusion: focal classification loss, KL-based
action regularizers, masked semantic loss, decomposition-loss composition,
and the pairwise interaction score.

Every differentiable term has a tape version (suffix ``_t``) used inside the
training graph plus a plain wrapper returning (value, gradients) for direct
inspection and finite-difference checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decomp import HoiVocabulary
from .errors import DimensionError, ParameterError, VocabularyError
from .numkit import KL_FLOOR, as_matrix, cosine_rows, softmax_row
from .numkit import tape as T


@dataclass
class LossWeights:
    """All scalar loss hyperparameters; defaults follow the reference recipe."""

    alpha: float = 80.0
    beta1: float = 0.1
    beta2: float = 0.1
    beta3: float = 0.001
    beta4: float = 50.0
    gamma1: float = 2.66
    gamma2: float = 2.66
    tau_score_train: float = 1.0
    tau_score_infer: float = 2.8
    tau_kl: float = 0.1
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        for name in ("alpha", "beta1", "beta2", "beta3", "beta4", "gamma1", "gamma2", "focal_gamma"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("tau_score_train", "tau_score_infer", "tau_kl"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be > 0")
        if not 0.0 <= self.focal_alpha <= 1.0:
            raise ParameterError("focal_alpha must be in [0, 1]")

    def tau_score(self, training: bool) -> float:
        return self.tau_score_train if training else self.tau_score_infer


@dataclass
class LabelMap:
    """N x N_a map with entry (i, a) = 1/q_a when class i has action a.

    q_a counts the interaction classes sharing action a, so each nonzero
    column sums to 1 and each row has exactly one nonzero entry.
    """

    matrix: np.ndarray
    variant: str

    def __post_init__(self):
        self.matrix = as_matrix(self.matrix, "label map")
        if self.variant not in ("l_u", "l_ao"):
            raise ParameterError(f"unknown label map variant {self.variant!r}")


def build_label_maps(vocab: HoiVocabulary) -> tuple[LabelMap, LabelMap]:
    """Both score-fusion label maps (identical construction, distinct roles)."""
    n, na = vocab.n_hoi, vocab.n_actions
    actions = vocab.action_index()
    counts = np.bincount(actions, minlength=na)
    if np.any(counts == 0):
        missing = int(np.where(counts == 0)[0][0])
        raise VocabularyError(f"action {vocab.actions[missing]!r} has no interaction class")
    m = np.zeros((n, na))
    m[np.arange(n), actions] = 1.0 / counts[actions]
    return LabelMap(m, "l_u"), LabelMap(m.copy(), "l_ao")


def focal_loss_t(logits: T.Tensor, targets: np.ndarray, focal_alpha: float, focal_gamma: float) -> T.Tensor:
    """Sigmoid focal loss: summed over classes, averaged over rows (pairs).

    Per entry: -alpha_t * (1 - p_t)^gamma * log(p_t), written via softplus so
    the log term never touches a clamped probability.
    """
    gt = np.asarray(targets, dtype=np.float64)
    if gt.shape != logits.shape:
        raise DimensionError("focal loss logits/targets mismatch", logits.shape, gt.shape)
    pos = T.constant(gt)
    neg = T.constant(1.0 - gt)
    # positives: p_t = sigmoid(s), 1 - p_t = sigmoid(-s), -log p_t = softplus(-s)
    pos_term = T.mul(T.power(T.sigmoid(T.neg(logits)), focal_gamma), T.softplus(T.neg(logits)))
    neg_term = T.mul(T.power(T.sigmoid(logits), focal_gamma), T.softplus(logits))
    per_entry = focal_alpha * T.mul(pos, pos_term) + (1.0 - focal_alpha) * T.mul(neg, neg_term)
    return T.tmean(T.tsum(per_entry, axis=1))


def focal_loss(s_a, s_gt, focal_alpha: float = 0.25, focal_gamma: float = 2.0) -> tuple[float, np.ndarray]:
    """Plain surface over 1-D score/label vectors or 2-D batches."""
    s = np.atleast_2d(np.asarray(s_a, dtype=np.float64))
    gt = np.atleast_2d(np.asarray(s_gt, dtype=np.float64))
    logits = T.leaf(s)
    loss = focal_loss_t(logits, gt, focal_alpha, focal_gamma)
    T.backward(loss)
    grad = logits.grad.reshape(np.shape(s_a))
    return loss.item(), grad


def rows_to_distributions(w, tau_kl: float) -> np.ndarray:
    """Temperature softmax of every row, turning weight rows into distributions."""
    if tau_kl <= 0.0:
        raise ParameterError(f"tau_kl must be > 0, got {tau_kl}")
    w = as_matrix(w, "weights")
    z = (w - w.max(axis=1, keepdims=True)) / tau_kl
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _kl_rows_to_target_t(logits: T.Tensor, target_rows: np.ndarray, tau_kl: float) -> T.Tensor:
    """Mean over rows of KL(softmax(logits/tau) || target), target held constant."""
    logq = np.log(np.maximum(target_rows, KL_FLOOR))
    logp = T.row_log_softmax(logits, tau_kl)
    p = T.exp(logp)
    per_row = T.tsum(T.mul(p, logp - T.constant(logq)), axis=1)
    return T.tmean(per_row)


def action_reg_hoi_t(w_ar: T.Tensor, w_a_const: np.ndarray, vocab: HoiVocabulary, tau_kl: float) -> T.Tensor:
    """Row-distribution KL from the action-related weight subset to the mapped
    action weights (target detached)."""
    if w_ar.shape[0] != vocab.n_hoi:
        raise VocabularyError(f"expected {vocab.n_hoi} interaction rows, got {w_ar.shape[0]}")
    if w_a_const.shape[0] != vocab.n_actions:
        raise VocabularyError(f"expected {vocab.n_actions} action rows, got {w_a_const.shape[0]}")
    if w_ar.shape[1] != w_a_const.shape[1]:
        raise DimensionError("subset width differs from action weights", w_ar.shape, w_a_const.shape)
    expanded = w_a_const[vocab.action_index()]
    targets = rows_to_distributions(expanded, tau_kl)
    return _kl_rows_to_target_t(w_ar, targets, tau_kl)


def action_reg_hoi(w_ar, w_a, vocab: HoiVocabulary, tau_kl: float) -> tuple[float, np.ndarray]:
    leaf = T.leaf(as_matrix(w_ar, "w_ar"))
    loss = action_reg_hoi_t(leaf, as_matrix(w_a, "w_a"), vocab, tau_kl)
    T.backward(loss)
    return loss.item(), leaf.grad


def action_reg_act_t(adapted: T.Tensor, original_const: np.ndarray, tau_kl: float) -> T.Tensor:
    """Row-distribution KL from adapted action weights to their originals."""
    if adapted.shape != original_const.shape:
        raise DimensionError("adapted/original action weight shapes differ", adapted.shape, original_const.shape)
    targets = rows_to_distributions(original_const, tau_kl)
    return _kl_rows_to_target_t(adapted, targets, tau_kl)


def action_reg_act(adapted_wa, original_wa, tau_kl: float) -> tuple[float, np.ndarray]:
    leaf = T.leaf(as_matrix(adapted_wa, "adapted"))
    loss = action_reg_act_t(leaf, as_matrix(original_wa, "original"), tau_kl)
    T.backward(loss)
    return loss.item(), leaf.grad


def semantic_loss_t(
    f_hat: T.Tensor,
    f_hat_ao: T.Tensor,
    f_const: np.ndarray,
    vocab: HoiVocabulary,
    tau: float,
) -> T.Tensor:
    """Same-object masked similarity-distribution KL, adapted sides vs originals.

    For every interaction class the cosine-similarity row is restricted to
    classes sharing its object, softmaxed at temperature tau on both sides,
    and the two KL terms (adapted features and fused features, each against
    the original features) are averaged over rows with >= 2 masked entries.
    """
    if tau <= 0.0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    n = f_const.shape[0]
    if f_hat.shape != (n, f_const.shape[1]) or f_hat_ao.shape != f_const.shape:
        raise DimensionError("semantic loss operands must all be N x d", f_hat.shape, f_const.shape)
    groups = [g for g in vocab.object_groups() if g.size >= 2]
    rows_counted = sum(g.size for g in groups)
    if rows_counted == 0:
        return T.constant(0.0)
    sim_orig = cosine_rows(f_const, f_const)
    total = T.constant(0.0)
    for hat in (f_hat, f_hat_ao):
        sim_hat = T.cosine_rows_t(hat, hat)
        for g in groups:
            sub = T.gather_cols(T.gather_rows(sim_hat, g), g)
            target = rows_to_distributions(sim_orig[np.ix_(g, g)], tau)
            logq = np.log(np.maximum(target, KL_FLOOR))
            logp = T.row_log_softmax(sub, tau)
            p = T.exp(logp)
            total = total + T.tsum(T.mul(p, logp - T.constant(logq)))
    return total * (1.0 / rows_counted)


def semantic_loss(f_hat, f_hat_ao, f, vocab: HoiVocabulary, tau: float) -> tuple[float, dict[str, np.ndarray]]:
    hat = T.leaf(as_matrix(f_hat, "f_hat"))
    hat_ao = T.leaf(as_matrix(f_hat_ao, "f_hat_ao"))
    loss = semantic_loss_t(hat, hat_ao, as_matrix(f, "f"), vocab, tau)
    T.backward(loss)
    zero = lambda t: np.zeros_like(t.value)
    return loss.item(), {
        "f_hat": hat.grad if hat.grad is not None else zero(hat),
        "f_hat_ao": hat_ao.grad if hat_ao.grad is not None else zero(hat_ao),
    }


def score_action_t(
    f_u: T.Tensor,
    t_ho: T.Tensor,
    f_ho: T.Tensor,
    f_hat: T.Tensor,
    f_hat_ao: T.Tensor,
    maps: tuple[LabelMap, LabelMap],
    w: LossWeights,
) -> T.Tensor:
    """Fused action score row: gamma1*(cos(f_u,F)+cos(T,F))@l_u + gamma2*cos(f_ho,Fao)@l_ao."""
    l_u, l_ao = maps
    if f_u.shape[1] != f_hat.shape[1] or f_ho.shape[1] != f_hat_ao.shape[1]:
        raise DimensionError("score operand widths differ", f_u.shape, f_hat.shape)
    union_term = T.cosine_rows_t(f_u, f_hat) + T.cosine_rows_t(t_ho, f_hat)
    hoi_term = T.cosine_rows_t(f_ho, f_hat_ao)
    return w.gamma1 * T.matmul(union_term, T.constant(l_u.matrix)) + w.gamma2 * T.matmul(
        hoi_term, T.constant(l_ao.matrix)
    )


def score_action(f_u, t_ho, f_ho, f_hat, f_hat_ao, maps, w: LossWeights) -> np.ndarray:
    out = score_action_t(
        T.constant(np.atleast_2d(f_u)),
        T.constant(np.atleast_2d(t_ho)),
        T.constant(np.atleast_2d(f_ho)),
        T.constant(f_hat),
        T.constant(f_hat_ao),
        maps,
        w,
    )
    return out.value[0]


def fd_loss(parts: dict, w: LossWeights):
    """Weighted sum of the decomposition constraints.

    Accepts floats or tape tensors; missing parts default to 0.
    """
    g = lambda k: parts.get(k, 0.0)
    return (
        w.beta1 * (g("recon_hoi") + g("recon_act"))
        + w.beta2 * (g("sparse_hoi") + g("sparse_act"))
        + w.beta3 * g("ort")
        + w.beta4 * (g("act_reg_hoi") + g("act_reg_act"))
    )


def total_loss(l_cls, l_sem, l_fd, w: LossWeights):
    """L_total = L_cls + alpha * L_sem + L_fd (floats or tensors)."""
    return l_cls + w.alpha * l_sem + l_fd


def hoi_score(s_h: float, s_o: float, s_a: float, tau_score: float) -> float:
    """Detector-confidence-weighted interaction score (s_h*s_o)^tau * sigmoid(s_a)."""
    if not 0.0 <= s_h <= 1.0 or not 0.0 <= s_o <= 1.0:
        raise ParameterError("detector scores must lie in [0, 1]")
    return (s_h * s_o) ** tau_score * (1.0 / (1.0 + math.exp(-s_a)))
