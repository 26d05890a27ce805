"""Feature factorization: PCA initialization, reconstruction/sparsity/orthogonality
objectives, action-basis selection, and the action-related weight subset.

A class-feature matrix F (rows unit-normalized) is factorized as F ~ W @ B.T
with per-class weights W (N x m) and a class-shared basis B (d x m).  A random
subset of basis columns doubles as the action basis; the matching weight
columns are the action-related subset regularized elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, ParameterError, VocabularyError
from .numkit import as_matrix
from .numkit import tape as T

_RANK_TIE_EPS = 1e-12  # absorbs float roundoff when a target is hit exactly


@dataclass
class FeatureMatrix:
    """N x d class-description embeddings with class names, rows unit-normalized."""

    features: np.ndarray
    class_names: list[str]
    kind: str = "hoi"

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        if self.kind not in ("hoi", "action", "object"):
            raise ParameterError(f"unknown feature kind {self.kind!r}")
        if len(self.class_names) != self.features.shape[0]:
            raise DimensionError(
                "class_names length differs from row count",
                (len(self.class_names),),
                self.features.shape,
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise ParameterError("class names must be unique")
        norms = np.linalg.norm(self.features, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ParameterError("feature rows must be unit-normalized (use from_raw)")

    @classmethod
    def from_raw(cls, features, class_names, kind: str = "hoi") -> "FeatureMatrix":
        """Build from arbitrary finite rows, normalizing each to unit L2."""
        feats = as_matrix(features, "features")
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ParameterError("cannot normalize a zero feature row")
        return cls(feats / norms, list(class_names), kind)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Factorization:
    """Paired weights (N x m) and basis (d x m) plus the action column index set."""

    weights: np.ndarray
    basis: np.ndarray
    action_index_set: list[int] = field(default_factory=list)
    frozen_basis: bool = True

    def __post_init__(self):
        self.weights = as_matrix(self.weights, "weights")
        self.basis = as_matrix(self.basis, "basis")
        m = self.basis.shape[1]
        idx = list(self.action_index_set)
        if any(not 0 <= i < m for i in idx):
            raise IndexError(f"action index out of range [0, {m})")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ParameterError("action_index_set must be strictly increasing")
        self.action_index_set = idx

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass
class HoiVocabulary:
    """Action/object name lists plus the (action, object) pair table and seen mask."""

    actions: list[str]
    objects: list[str]
    pairs: list[tuple[int, int]]
    seen_mask: np.ndarray

    def __post_init__(self):
        self.seen_mask = np.asarray(self.seen_mask, dtype=bool)
        if self.seen_mask.shape != (len(self.pairs),):
            raise VocabularyError("seen_mask length differs from pair count")
        for a, o in self.pairs:
            if not 0 <= a < len(self.actions):
                raise VocabularyError(f"pair references unknown action index {a}")
            if not 0 <= o < len(self.objects):
                raise VocabularyError(f"pair references unknown object index {o}")
        if len(set(self.pairs)) != len(self.pairs):
            raise VocabularyError("duplicate (action, object) pairs")

    @property
    def n_hoi(self) -> int:
        return len(self.pairs)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    def action_index(self) -> np.ndarray:
        """Action index of every HOI class, in class order."""
        return np.array([a for a, _ in self.pairs], dtype=np.intp)

    def object_index(self) -> np.ndarray:
        return np.array([o for _, o in self.pairs], dtype=np.intp)

    def object_groups(self) -> list[np.ndarray]:
        """HOI class indices grouped by object, one array per object."""
        obj = self.object_index()
        return [np.where(obj == o)[0] for o in range(self.n_objects)]

    def hoi_names(self) -> list[str]:
        return [f"{self.actions[a]} {self.objects[o]}" for a, o in self.pairs]


def energy_curve(f: FeatureMatrix) -> np.ndarray:
    """Cumulative squared-singular-value fraction of the uncentered features."""
    s = np.linalg.svd(f.features, compute_uv=False)
    cum = np.cumsum(s * s)
    return cum / cum[-1]


def pca_init(f: FeatureMatrix, energy_target: float) -> tuple[Factorization, float]:
    """Truncated uncentered SVD initialization.

    Picks the smallest rank whose cumulative squared-singular-value fraction
    reaches ``energy_target``; weights get U_r * S_r, the basis gets V_r.
    """
    if not 0.0 < energy_target <= 1.0:
        raise ParameterError(f"energy_target must be in (0, 1], got {energy_target}")
    if f.n < 2:
        raise ParameterError("need at least 2 rows to factorize")
    u, s, vt = np.linalg.svd(f.features, full_matrices=False)
    cum = np.cumsum(s * s)
    frac = cum / cum[-1]
    m = int(np.searchsorted(frac, energy_target - _RANK_TIE_EPS) + 1)
    m = min(m, frac.size)
    weights = u[:, :m] * s[:m]
    basis = vt[:m].T
    return Factorization(weights, basis), float(frac[m - 1])


def reconstruct(fac: Factorization, index_subset=None) -> np.ndarray:
    """W @ B.T, or W @ B[:, subset].T when a basis-column subset is given."""
    basis = fac.basis if index_subset is None else fac.basis[:, np.asarray(index_subset, dtype=np.intp)]
    if fac.weights.shape[1] != basis.shape[1]:
        raise DimensionError("weights/basis rank mismatch", fac.weights.shape, basis.shape)
    return fac.weights @ basis.T


def recon_loss_t(f_const: T.Tensor, weights: T.Tensor, basis: T.Tensor) -> T.Tensor:
    """Squared Frobenius reconstruction residual || F - W B^T ||_F^2."""
    if f_const.shape[0] != weights.shape[0] or f_const.shape[1] != basis.shape[0]:
        raise DimensionError("reconstruction shapes inconsistent", f_const.shape, (weights.shape, basis.shape))
    resid = f_const - T.matmul(weights, T.transpose(basis))
    return T.tsum(T.square(resid))


def recon_loss(f: FeatureMatrix, fac: Factorization) -> tuple[float, dict[str, np.ndarray]]:
    """Reconstruction loss and gradients w.r.t. weights (and basis unless frozen)."""
    w = T.leaf(fac.weights)
    b = T.leaf(fac.basis)
    loss = recon_loss_t(T.constant(f.features), w, b)
    T.backward(loss)
    grads = {"weights": w.grad}
    if not fac.frozen_basis:
        grads["basis"] = b.grad
    return loss.item(), grads


def sparsity_loss_t(weights: T.Tensor) -> T.Tensor:
    return T.tsum(T.tabs(weights))


def sparsity_loss(w) -> tuple[float, np.ndarray]:
    """Entrywise L1 of the weights; subgradient 0 at exact zeros."""
    wt = T.leaf(as_matrix(w, "weights"))
    loss = sparsity_loss_t(wt)
    T.backward(loss)
    return loss.item(), wt.grad


def orthogonality_loss_t(basis: T.Tensor, squared: bool = True) -> T.Tensor:
    """Sum over ordered column pairs i != j of (b_i . b_j)^2 (or the raw products)."""
    gram = T.matmul(T.transpose(basis), basis)
    off = gram - T.mul(gram, T.constant(np.eye(basis.shape[1])))
    return T.tsum(T.square(off)) if squared else T.tsum(off)


def orthogonality_loss(basis, squared: bool = True) -> tuple[float, np.ndarray, bool]:
    """Orthogonality penalty, its gradient, and a degenerate-rank warning flag.

    ``squared=False`` exposes the raw inner-product sum for comparison runs.
    """
    basis = as_matrix(basis, "basis")
    if basis.shape[1] < 2:
        return 0.0, np.zeros_like(basis), True
    bt = T.leaf(basis)
    loss = orthogonality_loss_t(bt, squared=squared)
    T.backward(loss)
    return loss.item(), bt.grad, False


def select_action_basis(fac: Factorization, k: int, seed: int) -> Factorization:
    """Draw k distinct basis-column indices from a seeded generator."""
    m = fac.rank
    if k > m:
        raise ParameterError(f"k={k} exceeds basis rank m={m}")
    rng = np.random.default_rng(seed)
    idx = sorted(int(i) for i in rng.choice(m, size=k, replace=False))
    return replace(fac, action_index_set=idx)


def extract_war(weights, index_set) -> np.ndarray:
    """Columns of the weights at the action index set, order preserved."""
    weights = as_matrix(weights, "weights")
    idx = np.asarray(list(index_set), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= weights.shape[1]):
        raise IndexError(f"index set exceeds weight columns (m={weights.shape[1]})")
    return weights[:, idx]


def fit_weights_least_squares(features: np.ndarray, basis_subset: np.ndarray) -> np.ndarray:
    """Minimizer of || F - W B^T ||_F over W for a fixed basis (pseudo-inverse)."""
    return features @ np.linalg.pinv(basis_subset.T)
