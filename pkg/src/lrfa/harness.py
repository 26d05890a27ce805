"""Synthetic zero-shot experiment generator, the training loop composing all
modules, and the evaluation metrics (per-class AP, seen/unseen/full mAP,
harmonic mean, action dissimilarity).

The generator builds class features as object centroid + small action offset
+ noise, so raw features cluster by object; scene pair features are drawn
near their class feature and painted onto a patch grid.  Everything is
deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import adapters as A
from . import decomp as D
from . import objective as O
from .errors import ConfigError, NumericError, UndefinedMetricError
from .numkit import OptimizerState, optimizer_step
from .numkit import tape as T

TRAIN_FRACTION = 0.75  # leading scenes train, the rest evaluate


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

SPLIT_MODES = ("uv", "nf_uc", "rf_uc", "uo")


@dataclass
class SyntheticConfig:
    n_actions: int = 12
    n_objects: int = 8
    n_hoi: int = 40
    feature_dim: int = 64
    unseen_fraction: float = 0.25
    cluster_noise: float = 0.05
    pairs_per_scene: int = 3
    scenes: int = 400
    seed: int = 0
    split_mode: str = "uv"
    grid: tuple[int, int] = (4, 4)
    image_size: tuple[float, float] = (1.0, 1.0)
    n_prior: int = 4
    action_strength: float = 0.6
    class_noise: float = 0.01
    patch_noise: float = 0.1
    # scene features carry a per-action visual direction absent from the
    # class descriptions (the modality gap); scaled by cluster_noise so the
    # noiseless configuration still reproduces class features exactly
    vision_twist: float = 8.0

    def __post_init__(self):
        if not 0.0 < self.unseen_fraction < 1.0:
            raise ConfigError(f"unseen_fraction must be in (0, 1), got {self.unseen_fraction}")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split mode must be one of {SPLIT_MODES}, got {self.split_mode!r}")
        if self.n_hoi < self.n_actions or self.n_hoi < self.n_objects:
            raise ConfigError("n_hoi must cover every action and object at least once")
        if self.n_hoi > self.n_actions * self.n_objects:
            raise ConfigError("n_hoi exceeds the number of distinct pairs")


@dataclass
class SyntheticScene:
    pairs: list[A.PairInstance]
    patch_features: np.ndarray
    gt_labels: np.ndarray
    gt_classes: np.ndarray
    prior_features: np.ndarray


@dataclass
class SyntheticData:
    features: dict[str, D.FeatureMatrix]
    vocab: D.HoiVocabulary
    scenes: list[SyntheticScene]
    latents: dict[str, np.ndarray]
    cfg: SyntheticConfig

    def train_scenes(self) -> list[SyntheticScene]:
        return self.scenes[: int(len(self.scenes) * TRAIN_FRACTION)]

    def eval_scenes(self) -> list[SyntheticScene]:
        return self.scenes[int(len(self.scenes) * TRAIN_FRACTION) :]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _build_vocabulary(cfg: SyntheticConfig, rng: np.random.Generator) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Random pair table covering every action and object, plus synthetic
    frequency ranks used by the rare-first / non-rare-first splits."""
    pairs: list[tuple[int, int]] = []
    used = set()
    for a in range(cfg.n_actions):
        o = int(rng.integers(cfg.n_objects))
        pairs.append((a, o))
        used.add((a, o))
    for o in range(cfg.n_objects):
        if not any(po == o for _, po in pairs):
            a = int(rng.integers(cfg.n_actions))
            if (a, o) in used:
                a = next(x for x in range(cfg.n_actions) if (x, o) not in used)
            pairs.append((a, o))
            used.add((a, o))
    all_pairs = [(a, o) for a in range(cfg.n_actions) for o in range(cfg.n_objects) if (a, o) not in used]
    extra = cfg.n_hoi - len(pairs)
    if extra < 0:
        raise ConfigError("n_hoi too small to cover all actions and objects")
    picks = rng.choice(len(all_pairs), size=extra, replace=False)
    pairs.extend(all_pairs[i] for i in sorted(int(i) for i in picks))
    freq = 1.0 / (1.0 + rng.permutation(len(pairs)))
    return pairs, freq


def _seen_mask(cfg: SyntheticConfig, pairs: list[tuple[int, int]], freq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(pairs)
    mask = np.ones(n, dtype=bool)
    if cfg.split_mode == "uv":
        n_unseen = max(1, round(cfg.unseen_fraction * cfg.n_actions))
        if n_unseen >= cfg.n_actions:
            raise ConfigError("unseen_fraction leaves no seen actions")
        unseen_actions = set(int(a) for a in rng.choice(cfg.n_actions, size=n_unseen, replace=False))
        mask = np.array([a not in unseen_actions for a, _ in pairs])
    elif cfg.split_mode == "uo":
        n_unseen = max(1, round(cfg.unseen_fraction * cfg.n_objects))
        if n_unseen >= cfg.n_objects:
            raise ConfigError("unseen_fraction leaves no seen objects")
        unseen_objects = set(int(o) for o in rng.choice(cfg.n_objects, size=n_unseen, replace=False))
        mask = np.array([o not in unseen_objects for _, o in pairs])
    else:
        # unseen-composition: walk classes by frequency (most common first for
        # nf_uc, rarest first for rf_uc) and hide those whose removal keeps
        # every action and object covered by a seen pair
        n_unseen = max(1, round(cfg.unseen_fraction * n))
        order = np.argsort(-freq if cfg.split_mode == "nf_uc" else freq, kind="stable")
        action_seen = np.bincount([a for a, _ in pairs], minlength=cfg.n_actions)
        object_seen = np.bincount([o for _, o in pairs], minlength=cfg.n_objects)
        hidden = 0
        for i in order:
            if hidden == n_unseen:
                break
            a, o = pairs[i]
            if action_seen[a] > 1 and object_seen[o] > 1:
                mask[i] = False
                action_seen[a] -= 1
                object_seen[o] -= 1
                hidden += 1
    if mask.all() or not mask.any():
        raise ConfigError("split produced an empty seen or unseen set")
    return mask


def _random_box(rng: np.random.Generator, image_size: tuple[float, float]) -> A.BoundingBox:
    iw, ih = image_size
    w = rng.uniform(0.15, 0.4) * iw
    h = rng.uniform(0.15, 0.4) * ih
    cx = rng.uniform(0.5 * w, iw - 0.5 * w)
    cy = rng.uniform(0.5 * h, ih - 0.5 * h)
    return A.BoundingBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticData:
    """Class features, vocabulary, and scene list for one seeded experiment."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.feature_dim
    pairs, freq = _build_vocabulary(cfg, rng)
    mask = _seen_mask(cfg, pairs, freq, rng)
    vocab = D.HoiVocabulary(
        actions=[f"act{i:02d}" for i in range(cfg.n_actions)],
        objects=[f"obj{i:02d}" for i in range(cfg.n_objects)],
        pairs=pairs,
        seen_mask=mask,
    )

    centroids = _normalize_rows(rng.normal(size=(cfg.n_objects, d)))
    offsets = cfg.action_strength * _normalize_rows(rng.normal(size=(cfg.n_actions, d)))
    vision_bias = cfg.cluster_noise * cfg.vision_twist * _normalize_rows(rng.normal(size=(cfg.n_actions, d)))
    a_idx, o_idx = vocab.action_index(), vocab.object_index()
    class_vecs = _normalize_rows(
        centroids[o_idx] + offsets[a_idx] + cfg.class_noise * rng.normal(size=(len(pairs), d))
    )
    f_hoi = D.FeatureMatrix(class_vecs, vocab.hoi_names(), "hoi")
    f_act = D.FeatureMatrix.from_raw(
        offsets + cfg.class_noise * rng.normal(size=offsets.shape), vocab.actions, "action"
    )
    f_obj = D.FeatureMatrix.from_raw(
        centroids + cfg.class_noise * rng.normal(size=centroids.shape), vocab.objects, "object"
    )

    h_cells, w_cells = cfg.grid
    scenes = []
    for _ in range(cfg.scenes):
        classes = rng.integers(0, len(pairs), size=cfg.pairs_per_scene)
        patch = cfg.patch_noise * rng.normal(size=(h_cells, w_cells, d))
        pair_list = []
        labels = np.zeros((cfg.pairs_per_scene, cfg.n_actions))
        priors = np.zeros((cfg.n_prior, d))
        for j, ci in enumerate(classes):
            ci = int(ci)
            base = f_hoi.features[ci] + vision_bias[a_idx[ci]]
            hbox = _random_box(rng, cfg.image_size)
            obox = _random_box(rng, cfg.image_size)
            f_h = base + cfg.cluster_noise * rng.normal(size=d)
            f_o = base + cfg.cluster_noise * rng.normal(size=d)
            pair = A.PairInstance.build(
                human_box=hbox,
                object_box=obox,
                human_score=float(rng.uniform(0.55, 0.95)),
                object_score=float(rng.uniform(0.55, 0.95)),
                object_class=int(o_idx[ci]),
                f_h=f_h,
                f_o=f_o,
            )
            pair_list.append(pair)
            labels[j, a_idx[ci]] = 1.0
            union = pair.union_box
            wy = A._axis_overlap(union.y1, union.y2, h_cells, cfg.image_size[1])
            wx = A._axis_overlap(union.x1, union.x2, w_cells, cfg.image_size[0])
            patch += np.outer(wy, wx)[:, :, None] * base
        for j in range(cfg.n_prior):
            ci = int(classes[j % len(classes)])
            priors[j] = f_hoi.features[ci] + cfg.cluster_noise * rng.normal(size=d)
        scenes.append(
            SyntheticScene(
                pairs=pair_list,
                patch_features=patch,
                gt_labels=labels,
                gt_classes=np.asarray(classes, dtype=np.intp),
                prior_features=_normalize_rows(priors),
            )
        )
    return SyntheticData(
        features={"hoi": f_hoi, "action": f_act, "object": f_obj},
        vocab=vocab,
        scenes=scenes,
        latents={
            "centroids": centroids,
            "offsets": offsets,
            "class_vectors": class_vecs,
            "vision_bias": vision_bias,
        },
        cfg=cfg,
    )


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    steps: int = 300
    lr: float = 1e-3
    seed: int = 0
    energy_target: float = 0.95
    k: int = 0  # 0 selects ceil(m / 2)
    loss_weights: O.LossWeights = field(default_factory=O.LossWeights)
    freeze_basis: bool = True
    train_weights: bool = True
    use_adapters: bool = True
    use_decomposition: bool = True
    encoder_layers: int = 2
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass
class Model:
    vocab: D.HoiVocabulary
    features: dict[str, D.FeatureMatrix]
    fac: D.Factorization
    action_weights: np.ndarray
    action_weights_init: np.ndarray
    blocks: dict[str, A.AdapterBlock]
    spatial: A.SpatialMlp
    encoder: A.ToyEncoder
    label_maps: tuple[O.LabelMap, O.LabelMap]
    weights_cfg: O.LossWeights
    cfg: TrainConfig
    basis_pinv_t: np.ndarray

    def all_params(self) -> dict[str, np.ndarray]:
        out = {"weights": self.fac.weights, "basis": self.fac.basis, "action_weights": self.action_weights}
        for name, block in self.blocks.items():
            out.update(block.param_dict(name))
        out.update(self.spatial.param_dict())
        return out

    def trainable_params(self) -> dict[str, np.ndarray]:
        cfg = self.cfg
        out: dict[str, np.ndarray] = {}
        if cfg.use_decomposition and cfg.train_weights:
            out["weights"] = self.fac.weights
            out["action_weights"] = self.action_weights
        if cfg.use_decomposition and not cfg.freeze_basis:
            out["basis"] = self.fac.basis
        if cfg.use_adapters and cfg.train_weights:
            for name, block in self.blocks.items():
                out.update(block.param_dict(name))
            out.update(self.spatial.param_dict())
        return out


def init_model(data: SyntheticData, cfg: TrainConfig) -> Model:
    d = data.cfg.feature_dim
    fac, _ = D.pca_init(data.features["hoi"], cfg.energy_target)
    k = cfg.k if cfg.k else math.ceil(fac.rank / 2)
    fac = D.select_action_basis(fac, k, cfg.seed)
    fac = replace(fac, frozen_basis=cfg.freeze_basis)
    basis_subset = fac.basis[:, fac.action_index_set]
    action_weights = D.fit_weights_least_squares(data.features["action"].features, basis_subset)
    blocks = {
        "weight_adapter": A.create_adapter_block("weight_adapter", d, seed=cfg.seed + 1),
        "text_fusion": A.create_adapter_block("text_fusion", d, seed=cfg.seed + 2),
        "image_fusion": A.create_adapter_block("image_fusion", d, seed=cfg.seed + 3),
        "prior_fusion": A.create_adapter_block("prior_fusion", d, seed=cfg.seed + 4),
    }
    return Model(
        vocab=data.vocab,
        features=data.features,
        fac=fac,
        action_weights=action_weights,
        action_weights_init=action_weights.copy(),
        blocks=blocks,
        spatial=A.create_spatial_mlp(d, seed=cfg.seed + 5),
        encoder=A.create_toy_encoder(d, cfg.encoder_layers, data.cfg.grid, seed=cfg.seed + 6),
        label_maps=O.build_label_maps(data.vocab),
        weights_cfg=cfg.loss_weights,
        cfg=cfg,
        basis_pinv_t=np.linalg.pinv(fac.basis.T),
    )


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


def _tensor_env(model: Model, trainable: dict[str, np.ndarray]) -> dict[str, T.Tensor]:
    env = {name: T.leaf(arr) for name, arr in trainable.items()}
    for name, arr in model.all_params().items():
        if name not in env:
            env[name] = T.constant(arr)
    return env


def _blend_rows(a_feat: T.Tensor, o_feat: T.Tensor, vocab: D.HoiVocabulary) -> T.Tensor:
    """Per-class mean of the action row and object row (fusion residual path)."""
    return 0.5 * (T.gather_rows(a_feat, vocab.action_index()) + T.gather_rows(o_feat, vocab.object_index()))


def forward_scene(
    model: Model,
    scene: SyntheticScene,
    env: dict[str, T.Tensor],
    training: bool,
    use_adapters: bool | None = None,
) -> dict:
    """Build the full differentiable graph for one scene.

    Returns the per-pair action score matrix plus every loss component; with
    ``use_adapters=False`` all four blocks are skipped (their residual inputs
    pass through), which is bit-identical to zero-initialized up-projections.
    """
    cfg = model.cfg
    w = model.weights_cfg
    vocab = model.vocab
    use_adapters = cfg.use_adapters if use_adapters is None else use_adapters
    img_size = model.cfg.synthetic.image_size
    grid = model.encoder.grid

    # vision branch: tokens -> prior fusion -> encoder -> region features
    token_rows = []
    for pair in scene.pairs:
        descr = A.spatial_descriptor(pair.human_box, pair.object_box, img_size)
        sp = A.spatial_feature_t(descr, env)
        token_rows.append(0.5 * (T.constant(pair.f_h.reshape(1, -1)) + T.constant(pair.f_o.reshape(1, -1))) + sp)
    tokens = T.concat(token_rows, axis=0)
    if use_adapters:
        tokens = A.prior_fusion_forward_t(tokens, scene.prior_features, model.blocks["prior_fusion"], env)
    patch2d = scene.patch_features.reshape(-1, model.encoder.d)
    map_rows, tok_hat, f_img = A.toy_encoder_forward_t(T.constant(patch2d), tokens, model.encoder)

    # language branch
    f_const = model.features["hoi"].features
    f_act_const = model.features["action"].features
    f_obj_const = model.features["object"].features
    idx = model.fac.action_index_set
    basis_trainable = cfg.use_decomposition and not cfg.freeze_basis
    if cfg.use_decomposition:
        if use_adapters:
            basis_arg = env["basis"] if basis_trainable else model.fac.basis
            pinv = None if basis_trainable else model.basis_pinv_t
            w_hat, f_hat = A.weight_adapter_forward_t(
                env["weights"], basis_arg, f_img, model.blocks["weight_adapter"], env,
                "weight_adapter", pinv,
            )
        else:
            w_hat = env["weights"]
            f_hat = T.matmul(w_hat, T.transpose(env["basis"]))
        basis_sub_t = T.transpose(T.gather_cols(env["basis"], idx))
        a_recon = T.matmul(env["action_weights"], basis_sub_t)
        if use_adapters:
            f_ao = A.text_fusion_forward_t(a_recon, T.constant(f_obj_const), vocab, model.blocks["text_fusion"], env)
        else:
            f_ao = _blend_rows(a_recon, T.constant(f_obj_const), vocab)
    else:
        w_hat = None
        f_hat = T.constant(f_const)
        f_ao = _blend_rows(T.constant(f_act_const), T.constant(f_obj_const), vocab)

    # per-pair region features, image fusion, and fused scores
    score_rows = []
    for j, pair in enumerate(scene.pairs):
        boxes = (pair.human_box, pair.object_box, pair.union_box)
        f_h_img, f_o_img, f_u_img = A.region_features_t(map_rows, boxes, grid, img_size)
        if use_adapters:
            f_ho = A.image_fusion_forward_t(f_h_img, f_o_img, model.blocks["image_fusion"], env)
        else:
            f_ho = 0.5 * (f_h_img + f_o_img)
        tok_j = T.gather_rows(tok_hat, [j])
        score_rows.append(O.score_action_t(f_u_img, tok_j, f_ho, f_hat, f_ao, model.label_maps, w))
    scores = T.concat(score_rows, axis=0)

    # losses
    visible = np.where(vocab.seen_mask[scene.gt_classes])[0] if training else np.arange(len(scene.pairs))
    if visible.size:
        l_cls = O.focal_loss_t(T.gather_rows(scores, visible), scene.gt_labels[visible], w.focal_alpha, w.focal_gamma)
    else:
        l_cls = T.constant(0.0)
    l_sem = O.semantic_loss_t(f_hat, f_ao, f_const, vocab, w.tau_kl)
    parts: dict = {}
    if cfg.use_decomposition:
        parts["recon_hoi"] = D.recon_loss_t(T.constant(f_const), env["weights"], env["basis"])
        parts["sparse_hoi"] = D.sparsity_loss_t(env["weights"])
        parts["ort"] = D.orthogonality_loss_t(env["basis"])
        parts["recon_act"] = T.tsum(T.square(T.constant(f_act_const) - a_recon))
        parts["sparse_act"] = D.sparsity_loss_t(env["action_weights"])
        parts["act_reg_hoi"] = O.action_reg_hoi_t(T.gather_cols(w_hat, idx), model.action_weights, vocab, w.tau_kl)
        parts["act_reg_act"] = O.action_reg_act_t(env["action_weights"], model.action_weights_init, w.tau_kl)
    l_fd = O.fd_loss(parts, w)
    total = O.total_loss(l_cls, l_sem, l_fd, w)
    return {
        "scores": scores,
        "cls": l_cls,
        "sem": l_sem,
        "fd": l_fd,
        "total": total,
        "parts": parts,
        "f_hat": f_hat,
        "f_ao": f_ao,
        "w_hat": w_hat,
    }


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train(data: SyntheticData, cfg: TrainConfig) -> tuple[Model, list[dict]]:
    """Run the composite-loss training loop; returns the model and loss trace."""
    model = init_model(data, cfg)
    params = model.trainable_params()
    state = OptimizerState(learning_rate=cfg.lr)
    scenes = data.train_scenes()
    trace: list[dict] = []
    for step in range(cfg.steps):
        scene = scenes[step % len(scenes)]
        env = _tensor_env(model, params)
        out = forward_scene(model, scene, env, training=True)
        record = {
            "step": step,
            "cls": _as_float(out["cls"]),
            "sem": _as_float(out["sem"]),
            "fd": _as_float(out["fd"]),
            "total": _as_float(out["total"]),
        }
        if not math.isfinite(record["total"]):
            raise NumericError(f"non-finite loss at step {step}: {record}")
        trace.append(record)
        if params:
            T.backward(_as_tensor(out["total"]))
            grads = {
                name: (env[name].grad if env[name].grad is not None else np.zeros_like(arr))
                for name, arr in params.items()
            }
            optimizer_step(params, grads, state)
    return model, trace


def _as_float(x) -> float:
    return x.item() if isinstance(x, T.Tensor) else float(x)


def _as_tensor(x) -> T.Tensor:
    return x if isinstance(x, T.Tensor) else T.constant(x)


def run_experiment(cfg: TrainConfig) -> tuple[SyntheticData, Model, list[dict]]:
    """Generate data per the config's synthetic section, then train."""
    synth = replace(cfg.synthetic, split_mode=cfg.synthetic.split_mode, seed=cfg.synthetic.seed)
    data = generate_synthetic(synth)
    model, trace = train(data, cfg)
    return data, model, trace


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def average_precision(scores, labels) -> float:
    """All-point-interpolation AP; ties broken by stable sort on descending score."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n_pos = labels.sum()
    if n_pos == 0:
        raise UndefinedMetricError("average precision undefined without positives")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    precision = hits / np.arange(1, ranked.size + 1)
    return float(precision[ranked > 0].sum() / n_pos)


def harmonic_mean(a: float, b: float) -> float:
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def action_dissimilarity(features, vocab: D.HoiVocabulary, literal_prefactor: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-object mean of (1 - cosine) over distinct same-object class pairs.

    ``literal_prefactor`` divides the ordered-pair sum by the group size
    instead of averaging over unordered pairs.  Groups of size < 2 report 0
    and are flagged.
    """
    feats = np.asarray(features, dtype=np.float64)
    ad = np.zeros(vocab.n_objects)
    flags = np.zeros(vocab.n_objects, dtype=bool)
    for o, group in enumerate(vocab.object_groups()):
        if group.size < 2:
            flags[o] = True
            continue
        sub = feats[group]
        gram = sub @ sub.T
        iu = np.triu_indices(group.size, k=1)
        dissim = (1.0 - gram[iu]).sum()
        if literal_prefactor:
            ad[o] = 2.0 * dissim / group.size
        else:
            ad[o] = dissim / iu[0].size
    return ad, flags


@dataclass
class EvalReport:
    ap_per_class: np.ndarray
    defined_mask: np.ndarray
    skipped_classes: list[int]
    map_seen: float
    map_unseen: float
    map_full: float
    harmonic_mean: float
    hm_defined: bool
    ad_per_object: np.ndarray


def evaluate(model: Model, scenes: list[SyntheticScene], vocab: D.HoiVocabulary, use_adapters: bool | None = None) -> EvalReport:
    """Score every pair against every object-compatible class and reduce to
    per-class AP, seen/unseen/full mAP, their harmonic mean, and the
    action-dissimilarity profile of the model's reconstructed features."""
    w = model.weights_cfg
    tau = w.tau_score(training=False)
    a_idx, o_idx = vocab.action_index(), vocab.object_index()
    class_scores: list[list[float]] = [[] for _ in range(vocab.n_hoi)]
    class_labels: list[list[float]] = [[] for _ in range(vocab.n_hoi)]
    env = _tensor_env(model, {})
    for scene in scenes:
        out = forward_scene(model, scene, env, training=False, use_adapters=use_adapters)
        s_a = out["scores"].value
        for j, pair in enumerate(scene.pairs):
            for c in np.where(o_idx == pair.object_class)[0]:
                score = O.hoi_score(pair.human_score, pair.object_score, float(s_a[j, a_idx[c]]), tau)
                class_scores[c].append(score)
                class_labels[c].append(float(scene.gt_labels[j, a_idx[c]]))
    ap = np.full(vocab.n_hoi, np.nan)
    skipped = []
    for c in range(vocab.n_hoi):
        try:
            ap[c] = average_precision(np.array(class_scores[c]), np.array(class_labels[c]))
        except UndefinedMetricError:
            skipped.append(c)
    defined = ~np.isnan(ap)
    seen_sel = defined & vocab.seen_mask
    unseen_sel = defined & ~vocab.seen_mask
    map_seen = float(ap[seen_sel].mean()) if seen_sel.any() else float("nan")
    map_unseen = float(ap[unseen_sel].mean()) if unseen_sel.any() else float("nan")
    map_full = float(ap[defined].mean()) if defined.any() else float("nan")
    hm_defined = math.isfinite(map_seen) and math.isfinite(map_unseen)
    hm = harmonic_mean(map_seen, map_unseen) if hm_defined else float("nan")

    if model.cfg.use_decomposition:
        recon = D.reconstruct(model.fac)
        feats = recon / np.linalg.norm(recon, axis=1, keepdims=True)
    else:
        feats = model.features["hoi"].features
    ad, _ = action_dissimilarity(feats, vocab)
    return EvalReport(
        ap_per_class=ap,
        defined_mask=defined,
        skipped_classes=skipped,
        map_seen=map_seen,
        map_unseen=map_unseen,
        map_full=map_full,
        harmonic_mean=hm,
        hm_defined=hm_defined,
        ad_per_object=ad,
    )


# ---------------------------------------------------------------------------
# ablation suite
# ---------------------------------------------------------------------------

ABLATION_CONFIGS = {
    "train_w_freeze_b": dict(train_weights=True, freeze_basis=True, use_decomposition=True),
    "train_both": dict(train_weights=True, freeze_basis=False, use_decomposition=True),
    "freeze_both": dict(train_weights=False, freeze_basis=True, use_decomposition=True),
    "no_decomposition": dict(train_weights=False, freeze_basis=True, use_decomposition=False),
}


def ablation_suite(cfg: TrainConfig) -> dict[str, EvalReport]:
    """Train the four freeze configurations on one identical split and report.

    The freeze flags only gate the factorization: the adaptation blocks train
    whenever the weights do, so the comparison isolates what the
    classification loss is allowed to reshape.
    """
    data = generate_synthetic(cfg.synthetic)
    reports = {}
    for name, flags in ABLATION_CONFIGS.items():
        run_cfg = replace(cfg, **flags)
        model, _ = train(data, run_cfg)
        reports[name] = evaluate(model, data.eval_scenes(), data.vocab)
    return reports
