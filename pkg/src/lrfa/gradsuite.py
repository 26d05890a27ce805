"""Registry of finite-difference checks covering every registered loss and
adapter block on small random instances.

Each entry builds an independent scenario (d <= 16, N <= 12), wraps the
forward into a (value, grads) callable, and runs the central-difference
checker.  The CLI gradcheck command and the acceptance suite both consume
``run_all``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import adapters as A
from . import decomp as D
from . import objective as O
from .decomp import HoiVocabulary
from .numkit import GradCheckReport, grad_check
from .numkit import tape as T


@dataclass
class CheckResult:
    name: str
    report: GradCheckReport

    @property
    def passed(self) -> bool:
        return self.report.max_relative_error < 1e-4


def _grads(lifted: dict) -> dict:
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in lifted.items()}


def _small_vocab() -> HoiVocabulary:
    return HoiVocabulary(
        actions=["a0", "a1", "a2", "a3"],
        objects=["o0", "o1", "o2"],
        pairs=[(0, 0), (1, 0), (2, 0), (0, 1), (3, 1), (1, 2), (2, 2), (3, 2)],
        seen_mask=[True, True, False, True, True, True, False, True],
    )


def _weighted_sum_loss(forward: Callable[[dict], T.Tensor], target: np.ndarray):
    def loss(params):
        lifted = T.lift(params)
        out = forward(lifted)
        scalar = T.tsum(T.mul(out, T.constant(target)))
        T.backward(scalar)
        return scalar.item(), _grads(lifted)

    return loss


def _scalar_loss(forward: Callable[[dict], T.Tensor]):
    def loss(params):
        lifted = T.lift(params)
        out = forward(lifted)
        T.backward(out)
        return out.item(), _grads(lifted)

    return loss


def build_checks(seed: int = 0) -> list[tuple[str, Callable, dict]]:
    """(name, loss_fn, params) triples for every registered loss and block."""
    rng = np.random.default_rng(seed)
    vocab = _small_vocab()
    n, na, no, d, m, k = vocab.n_hoi, vocab.n_actions, vocab.n_objects, 12, 5, 3
    f = rng.normal(size=(n, d))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    f_act = rng.normal(size=(na, d))
    f_obj = rng.normal(size=(no, d))
    checks: list[tuple[str, Callable, dict]] = []

    checks.append(
        (
            "recon_loss",
            _scalar_loss(lambda p: D.recon_loss_t(T.constant(f), p["weights"], p["basis"])),
            {"weights": rng.normal(size=(n, m)), "basis": rng.normal(size=(d, m))},
        )
    )
    # keep sparsity probes away from the |x| kink
    w_sparse = rng.uniform(0.3, 1.5, size=(n, m)) * rng.choice([-1.0, 1.0], size=(n, m))
    checks.append(("sparsity_loss", _scalar_loss(lambda p: D.sparsity_loss_t(p["weights"])), {"weights": w_sparse}))
    checks.append(
        ("orthogonality_loss", _scalar_loss(lambda p: D.orthogonality_loss_t(p["basis"])), {"basis": rng.normal(size=(d, m))})
    )
    w_a_const = rng.normal(size=(na, k))
    checks.append(
        (
            "action_reg_hoi",
            _scalar_loss(lambda p: O.action_reg_hoi_t(p["w_ar"], w_a_const, vocab, 0.1)),
            {"w_ar": rng.normal(size=(n, k))},
        )
    )
    checks.append(
        (
            "action_reg_act",
            _scalar_loss(lambda p: O.action_reg_act_t(p["adapted"], w_a_const, 0.1)),
            {"adapted": rng.normal(size=(na, k))},
        )
    )
    gt = (rng.random((3, na)) < 0.4).astype(float)
    checks.append(
        (
            "focal_loss",
            _scalar_loss(lambda p: O.focal_loss_t(p["scores"], gt, 0.25, 2.0)),
            {"scores": rng.normal(size=(3, na))},
        )
    )
    checks.append(
        (
            "semantic_loss",
            _scalar_loss(lambda p: O.semantic_loss_t(p["f_hat"], p["f_ao"], f, vocab, 0.4)),
            {"f_hat": rng.normal(size=(n, d)), "f_ao": rng.normal(size=(n, d))},
        )
    )

    # adapter blocks, up-projections perturbed so gradients actually flow
    def perturbed(kind, s):
        block = A.create_adapter_block(kind, d, seed=s)
        block.up = 0.2 * np.random.default_rng(s + 500).normal(size=block.up.shape)
        return block

    wa_block = perturbed("weight_adapter", seed + 1)
    basis = rng.normal(size=(d, m))
    pinv = np.linalg.pinv(basis.T)
    f_img = rng.normal(size=(1, d))
    target_nd = rng.normal(size=(n, d))
    params = {"weights": rng.normal(size=(n, m))}
    params.update(wa_block.param_dict("weight_adapter"))
    checks.append(
        (
            "weight_adapter",
            _weighted_sum_loss(
                lambda p: A.weight_adapter_forward_t(
                    p["weights"], basis, T.constant(f_img), wa_block, p, "weight_adapter", pinv
                )[1],
                target_nd,
            ),
            params,
        )
    )

    tf_block = perturbed("text_fusion", seed + 2)
    params = {"f_act": f_act.copy()}
    params.update(tf_block.param_dict("text_fusion"))
    checks.append(
        (
            "text_fusion",
            _weighted_sum_loss(
                lambda p: A.text_fusion_forward_t(p["f_act"], T.constant(f_obj), vocab, tf_block, p, "text_fusion"),
                target_nd,
            ),
            params,
        )
    )

    if_block = perturbed("image_fusion", seed + 3)
    params = {"f_h": rng.normal(size=(1, d)), "f_o": rng.normal(size=(1, d))}
    params.update(if_block.param_dict("image_fusion"))
    checks.append(
        (
            "image_fusion",
            _weighted_sum_loss(
                lambda p: A.image_fusion_forward_t(p["f_h"], p["f_o"], if_block, p, "image_fusion"),
                rng.normal(size=(1, d)),
            ),
            params,
        )
    )

    pf_block = perturbed("prior_fusion", seed + 4)
    priors = rng.normal(size=(4, d))
    params = {"tokens": rng.normal(size=(3, d))}
    params.update(pf_block.param_dict("prior_fusion"))
    checks.append(
        (
            "prior_fusion",
            _weighted_sum_loss(
                lambda p: A.prior_fusion_forward_t(p["tokens"], priors, pf_block, p, "prior_fusion"),
                rng.normal(size=(3, d)),
            ),
            params,
        )
    )

    mlp = A.create_spatial_mlp(d, hidden=16, seed=seed + 5)
    descr = A.spatial_descriptor(
        A.BoundingBox(0.1, 0.1, 0.5, 0.6), A.BoundingBox(0.3, 0.2, 0.9, 0.8), (1.0, 1.0)
    )
    checks.append(
        (
            "spatial_mlp",
            _weighted_sum_loss(lambda p: A.spatial_feature_t(descr, p), rng.normal(size=(1, d))),
            mlp.param_dict(),
        )
    )
    return checks


def run_all(seed: int = 0, step: float = 1e-5) -> list[CheckResult]:
    """Run every registered check; results carry the full report."""
    return [CheckResult(name, grad_check(fn, params, step)) for name, fn, params in build_checks(seed)]


def end_to_end_check(seed: int = 0, step: float = 1e-5) -> CheckResult:
    """Differentiate one full training scene w.r.t. every trainable parameter."""
    from . import harness as H

    scfg = H.SyntheticConfig(
        n_actions=3, n_objects=2, n_hoi=5, feature_dim=12, scenes=4,
        pairs_per_scene=2, seed=seed, grid=(2, 2), n_prior=2,
    )
    data = H.generate_synthetic(scfg)
    cfg = H.TrainConfig(steps=0, seed=seed, synthetic=scfg)
    model = H.init_model(data, cfg)
    # perturb up-projections so the blocks contribute
    rng = np.random.default_rng(seed + 99)
    for block in model.blocks.values():
        block.up += 0.2 * rng.normal(size=block.up.shape)
    scene = data.scenes[0]
    trainable = model.trainable_params()

    def loss(params):
        env = H._tensor_env(model, dict(params))
        out = H.forward_scene(model, scene, env, training=True)
        total = out["total"]
        T.backward(total)
        return total.item(), {k: (env[k].grad if env[k].grad is not None else np.zeros_like(v)) for k, v in params.items()}

    return CheckResult("end_to_end_scene", grad_check(loss, trainable, step))
