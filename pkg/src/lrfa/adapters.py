"""Attention-based adaptation blocks and the vision-branch feature machinery.

Four bottleneck blocks share one structure (down-project, attention in the
bottleneck, zero-initialized up-project, residual): the weight adapter
(self + cross attention against a pooled image feature), text fusion and image
fusion (self attention over concatenated feature pairs), and prior fusion
(cross attention against prior-knowledge rows).  Zero-initialized up
projections make every block exactly the identity map on its residual input.

The vision side provides box geometry, the learned spatial feature, pair
tokens, a frozen toy transformer encoder standing in for a pretrained visual
backbone, and exact-area region pooling over its output feature map.

Functions with the ``_t`` suffix build tape graphs from a dict of lifted
parameter tensors; the plain variants wrap them for array-in/array-out use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInputError, DimensionError, ParameterError
from .numkit import tape as T

DEFAULT_HEADS = 2
ROI_BINS = 7


# ---------------------------------------------------------------------------
# box geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ParameterError(f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    """Tight bounding box of a union b."""
    return BoundingBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


# ---------------------------------------------------------------------------
# spatial feature
# ---------------------------------------------------------------------------


def spatial_descriptor(h: BoundingBox, o: BoundingBox, image_size: tuple[float, float]) -> np.ndarray:
    """The 11 box-geometry scalars, min-max normalized by the image dimensions:
    centers, widths, heights of both boxes, IoU, and both relative areas."""
    iw, ih = image_size
    if iw <= 0.0 or ih <= 0.0:
        raise ParameterError(f"image size must be positive, got {image_size}")
    img_area = iw * ih
    hx, hy = h.center
    ox, oy = o.center
    return np.array(
        [
            hx / iw,
            hy / ih,
            h.width / iw,
            h.height / ih,
            ox / iw,
            oy / ih,
            o.width / iw,
            o.height / ih,
            iou(h, o),
            h.area / img_area,
            o.area / img_area,
        ]
    )


@dataclass
class SpatialMlp:
    """Two-layer tanh map from the 11-scalar descriptor to feature dimension d."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def param_dict(self, prefix: str = "spatial") -> dict[str, np.ndarray]:
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1, f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


def create_spatial_mlp(d: int, hidden: int = 64, seed: int = 0) -> SpatialMlp:
    rng = np.random.default_rng(seed)
    return SpatialMlp(
        w1=_uniform_init(rng, 11, hidden),
        b1=np.zeros((1, hidden)),
        w2=_uniform_init(rng, hidden, d),
        b2=np.zeros((1, d)),
    )


def spatial_feature_t(descriptor: np.ndarray, p: dict, prefix: str = "spatial") -> T.Tensor:
    x = T.constant(descriptor.reshape(1, -1))
    hidden = T.tanh(T.matmul(x, p[f"{prefix}.w1"]) + p[f"{prefix}.b1"])
    return T.matmul(hidden, p[f"{prefix}.w2"]) + p[f"{prefix}.b2"]


def spatial_feature(h: BoundingBox, o: BoundingBox, mlp: SpatialMlp, image_size=(1.0, 1.0)) -> np.ndarray:
    """Map the normalized box descriptor through the two-layer net to a d-vector."""
    descr = spatial_descriptor(h, o, image_size)
    return spatial_feature_t(descr, T.lift(mlp.param_dict())).value[0]


# ---------------------------------------------------------------------------
# pair instances and tokens
# ---------------------------------------------------------------------------


@dataclass
class PairInstance:
    """One human-object candidate: boxes, detector scores, appearance features,
    spatial feature, and the combined token."""

    human_box: BoundingBox
    object_box: BoundingBox
    union_box: BoundingBox
    human_score: float
    object_score: float
    object_class: int
    f_h: np.ndarray
    f_o: np.ndarray
    spatial: np.ndarray | None = None
    token: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.human_score <= 1.0 or not 0.0 <= self.object_score <= 1.0:
            raise ParameterError("detector scores must lie in [0, 1]")
        self.f_h = np.asarray(self.f_h, dtype=np.float64)
        self.f_o = np.asarray(self.f_o, dtype=np.float64)
        if self.f_h.shape != self.f_o.shape:
            raise DimensionError("human/object feature dims differ", self.f_h.shape, self.f_o.shape)

    @classmethod
    def build(cls, human_box, object_box, human_score, object_score, object_class, f_h, f_o) -> "PairInstance":
        return cls(
            human_box=human_box,
            object_box=object_box,
            union_box=union_box(human_box, object_box),
            human_score=human_score,
            object_score=object_score,
            object_class=object_class,
            f_h=f_h,
            f_o=f_o,
        )


def build_ho_token(pair: PairInstance) -> PairInstance:
    """Set token = (f_h + f_o)/2 + spatial on a pair with a populated spatial feature."""
    if pair.spatial is None:
        raise ParameterError("spatial feature must be populated before building the token")
    if pair.spatial.shape != pair.f_h.shape:
        raise DimensionError("spatial feature width differs from appearance", pair.spatial.shape, pair.f_h.shape)
    token = 0.5 * (pair.f_h + pair.f_o) + pair.spatial
    return replace(pair, token=token)


# ---------------------------------------------------------------------------
# adapter blocks
# ---------------------------------------------------------------------------


def _uniform_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols))


def bottleneck_width(d: int) -> int:
    """512 -> 64 per the reference recipe; otherwise max(8, d // 8)."""
    return 64 if d == 512 else max(8, d // 8)


@dataclass
class AttentionParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    heads: int

    def __post_init__(self):
        r = self.wq.shape[0]
        if r % self.heads != 0:
            raise ParameterError(f"width {r} not divisible by {self.heads} heads")

    @property
    def head_dim(self) -> int:
        return self.wq.shape[0] // self.heads

    def param_dict(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.wq": self.wq, f"{prefix}.wk": self.wk, f"{prefix}.wv": self.wv, f"{prefix}.wo": self.wo}


def _create_attention(rng: np.random.Generator, r: int, heads: int) -> AttentionParams:
    return AttentionParams(
        wq=_uniform_init(rng, r, r),
        wk=_uniform_init(rng, r, r),
        wv=_uniform_init(rng, r, r),
        wo=_uniform_init(rng, r, r),
        heads=heads,
    )


BLOCK_KINDS = ("weight_adapter", "text_fusion", "image_fusion", "prior_fusion")
_PAIR_INPUT_KINDS = ("text_fusion", "image_fusion")


@dataclass
class AdapterBlock:
    """Down-project / attention / up-project / residual block parameters.

    ``down`` maps the block input (d, or 2d for the concatenating fusion
    kinds) into the bottleneck r; ``up`` maps back to d and starts at zero so
    the block opens as an exact identity on its residual path.
    """

    kind: str
    down: np.ndarray
    up: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    self_attn: AttentionParams | None = None
    cross_attn: AttentionParams | None = None

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ParameterError(f"unknown block kind {self.kind!r}")
        if self.bottleneck >= self.dim:
            raise ParameterError(f"bottleneck r={self.bottleneck} must be smaller than d={self.dim}")

    @property
    def bottleneck(self) -> int:
        return self.down.shape[1]

    @property
    def dim(self) -> int:
        return self.up.shape[1]

    def param_dict(self, prefix: str) -> dict[str, np.ndarray]:
        out = {
            f"{prefix}.down": self.down,
            f"{prefix}.up": self.up,
            f"{prefix}.ln_gain": self.ln_gain,
            f"{prefix}.ln_bias": self.ln_bias,
        }
        if self.self_attn is not None:
            out.update(self.self_attn.param_dict(f"{prefix}.self"))
        if self.cross_attn is not None:
            out.update(self.cross_attn.param_dict(f"{prefix}.cross"))
        return out


def create_adapter_block(kind: str, d: int, r: int | None = None, heads: int = DEFAULT_HEADS, seed: int = 0) -> AdapterBlock:
    """Seeded block: 1/sqrt(fan_in) uniform projections, zero up-projection."""
    r = bottleneck_width(d) if r is None else r
    rng = np.random.default_rng(seed)
    in_dim = 2 * d if kind in _PAIR_INPUT_KINDS else d
    block = AdapterBlock(
        kind=kind,
        down=_uniform_init(rng, in_dim, r),
        up=np.zeros((r, d)),
        ln_gain=np.ones((1, r)),
        ln_bias=np.zeros((1, r)),
    )
    if kind in ("weight_adapter", "text_fusion", "image_fusion"):
        block.self_attn = _create_attention(rng, r, heads)
    if kind in ("weight_adapter", "prior_fusion"):
        block.cross_attn = _create_attention(rng, r, heads)
    return block


def _mha_t(q_in: T.Tensor, kv_in: T.Tensor, p: dict, prefix: str, attn: AttentionParams) -> T.Tensor:
    """Scaled dot-product multi-head attention in the bottleneck width."""
    q = T.matmul(q_in, p[f"{prefix}.wq"])
    k = T.matmul(kv_in, p[f"{prefix}.wk"])
    v = T.matmul(kv_in, p[f"{prefix}.wv"])
    hd = attn.head_dim
    scale = 1.0 / math.sqrt(hd)
    heads = []
    for h in range(attn.heads):
        cols = np.arange(h * hd, (h + 1) * hd)
        qh, kh, vh = T.gather_cols(q, cols), T.gather_cols(k, cols), T.gather_cols(v, cols)
        weights = T.row_softmax(T.matmul(qh, T.transpose(kh)) * scale)
        heads.append(T.matmul(weights, vh))
    return T.matmul(T.concat(heads, axis=1), p[f"{prefix}.wo"])


def _bottleneck_in(x: T.Tensor, p: dict, prefix: str) -> T.Tensor:
    return T.layer_norm_rows(T.matmul(x, p[f"{prefix}.down"]), p[f"{prefix}.ln_gain"], p[f"{prefix}.ln_bias"])


def weight_adapter_forward_t(
    weights: T.Tensor,
    basis: np.ndarray | T.Tensor,
    f_img: T.Tensor,
    block: AdapterBlock,
    p: dict,
    prefix: str = "weight_adapter",
    basis_pinv_t: np.ndarray | None = None,
) -> tuple[T.Tensor, T.Tensor]:
    """Adapt class weights against a pooled image feature.

    Input W B^T runs through self attention over class rows, then cross
    attention with the image feature as key/value; the up-projected delta is
    carried back to weight space through the basis' pseudo-inverse so the
    adapted features stay inside the basis span.  Returns (W_hat, F_hat).

    The adapter input and the pseudo-inverse always use the basis VALUE (the
    fixed template side); passing the basis as a tensor additionally routes
    gradients through the final reconstruction product, for configurations
    that train the basis with the classification loss.
    """
    if block.kind != "weight_adapter":
        raise ParameterError(f"expected weight_adapter block, got {block.kind!r}")
    basis_value = basis.value if isinstance(basis, T.Tensor) else basis
    if weights.shape[1] != basis_value.shape[1]:
        raise DimensionError("weights/basis rank mismatch", weights.shape, basis_value.shape)
    if basis_pinv_t is None:
        basis_pinv_t = np.linalg.pinv(basis_value.T)
    x = T.matmul(weights, T.constant(basis_value.T))
    h = _bottleneck_in(x, p, prefix)
    s = _mha_t(h, h, p, f"{prefix}.self", block.self_attn)
    kv = _bottleneck_in(f_img, p, prefix)
    c = _mha_t(s, kv, p, f"{prefix}.cross", block.cross_attn)
    delta = T.matmul(c, p[f"{prefix}.up"])
    w_hat = weights + T.matmul(delta, T.constant(basis_pinv_t))
    if isinstance(basis, T.Tensor):
        f_hat = T.matmul(w_hat, T.transpose(basis))
    else:
        f_hat = T.matmul(w_hat, T.constant(basis_value.T))
    return w_hat, f_hat


def weight_adapter_forward(weights, basis, f_img, block: AdapterBlock) -> tuple[np.ndarray, np.ndarray]:
    p = T.lift(block.param_dict("weight_adapter"))
    w_hat, f_hat = weight_adapter_forward_t(
        T.constant(weights), np.asarray(basis, dtype=np.float64), T.constant(np.atleast_2d(f_img)), block, p
    )
    return w_hat.value, f_hat.value


def text_fusion_forward_t(
    action_features: T.Tensor,
    object_features: T.Tensor,
    vocab,
    block: AdapterBlock,
    p: dict,
    prefix: str = "text_fusion",
) -> T.Tensor:
    """Fuse per-pair action and object rows into one row per interaction class.

    Each class token is the concatenation of its action row and object row;
    tokens self-attend in the bottleneck and the up-projected delta is added
    to the mean of the two halves (the dimension-matching residual).
    """
    if block.kind != "text_fusion":
        raise ParameterError(f"expected text_fusion block, got {block.kind!r}")
    a_rows = T.gather_rows(action_features, vocab.action_index())
    o_rows = T.gather_rows(object_features, vocab.object_index())
    x = T.concat([a_rows, o_rows], axis=1)
    h = _bottleneck_in(x, p, prefix)
    s = _mha_t(h, h, p, f"{prefix}.self", block.self_attn)
    delta = T.matmul(s, p[f"{prefix}.up"])
    return 0.5 * (a_rows + o_rows) + delta


def text_fusion_forward(action_features, object_features, vocab, block: AdapterBlock) -> np.ndarray:
    p = T.lift(block.param_dict("text_fusion"))
    return text_fusion_forward_t(T.constant(action_features), T.constant(object_features), vocab, block, p).value


def image_fusion_forward_t(
    f_h: T.Tensor, f_o: T.Tensor, block: AdapterBlock, p: dict, prefix: str = "image_fusion"
) -> T.Tensor:
    """Fuse human and object region features into one d-vector (1 x d)."""
    if block.kind != "image_fusion":
        raise ParameterError(f"expected image_fusion block, got {block.kind!r}")
    if f_h.shape != f_o.shape:
        raise DimensionError("human/object feature shapes differ", f_h.shape, f_o.shape)
    x = T.concat([f_h, f_o], axis=1)
    h = _bottleneck_in(x, p, prefix)
    s = _mha_t(h, h, p, f"{prefix}.self", block.self_attn)
    delta = T.matmul(s, p[f"{prefix}.up"])
    return 0.5 * (f_h + f_o) + delta


def image_fusion_forward(f_h_img, f_o_img, block: AdapterBlock) -> np.ndarray:
    p = T.lift(block.param_dict("image_fusion"))
    out = image_fusion_forward_t(T.constant(np.atleast_2d(f_h_img)), T.constant(np.atleast_2d(f_o_img)), block, p)
    return out.value[0]


def prior_fusion_forward_t(
    tokens: T.Tensor, prior_features: np.ndarray, block: AdapterBlock, p: dict, prefix: str = "prior_fusion"
) -> T.Tensor:
    """Cross-attend pair tokens (queries) against prior-knowledge rows (keys/values)."""
    if block.kind != "prior_fusion":
        raise ParameterError(f"expected prior_fusion block, got {block.kind!r}")
    if prior_features.size == 0:
        return tokens
    if prior_features.shape[1] != tokens.shape[1]:
        raise DimensionError("prior feature width differs from tokens", prior_features.shape, tokens.shape)
    h = _bottleneck_in(tokens, p, prefix)
    kv = _bottleneck_in(T.constant(prior_features), p, prefix)
    c = _mha_t(h, kv, p, f"{prefix}.cross", block.cross_attn)
    delta = T.matmul(c, p[f"{prefix}.up"])
    return tokens + delta


def prior_fusion_forward(tokens, prior_features, block: AdapterBlock) -> np.ndarray:
    p = T.lift(block.param_dict("prior_fusion"))
    return prior_fusion_forward_t(T.constant(tokens), np.asarray(prior_features, dtype=np.float64), block, p).value


# ---------------------------------------------------------------------------
# toy encoder stand-in for the frozen visual backbone
# ---------------------------------------------------------------------------


@dataclass
class EncoderOutput:
    adapted_tokens: np.ndarray
    feature_map: np.ndarray
    pooled: np.ndarray

    def __post_init__(self):
        mean = self.feature_map.reshape(-1, self.feature_map.shape[-1]).mean(axis=0)
        if np.max(np.abs(mean - self.pooled)) > 1e-12:
            raise ParameterError("pooled feature disagrees with the spatial mean")


@dataclass
class ToyEncoder:
    """Frozen small transformer: position-encoded patches plus pair tokens run
    through pre-norm self-attention/feed-forward layers."""

    d: int
    layers: int
    grid: tuple[int, int]
    heads: int
    params: dict[str, np.ndarray]
    pos_encoding: np.ndarray


def _sinusoidal_encoding(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / d)
    enc = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return enc


def create_toy_encoder(
    d: int,
    layers: int,
    grid: tuple[int, int],
    seed: int = 0,
    heads: int = DEFAULT_HEADS,
    mix_scale: float = 0.3,
) -> ToyEncoder:
    """Seeded frozen encoder.

    ``mix_scale`` shrinks the residual-branch weights so the stand-in behaves
    like a pretrained backbone: it mixes context in without drowning the
    input semantics.
    """
    rng = np.random.default_rng(seed)
    hidden = 2 * d
    params: dict[str, np.ndarray] = {}
    for layer in range(layers):
        pre = f"enc{layer}"
        params[f"{pre}.ln1_gain"] = np.ones((1, d))
        params[f"{pre}.ln1_bias"] = np.zeros((1, d))
        params[f"{pre}.self.wq"] = _uniform_init(rng, d, d)
        params[f"{pre}.self.wk"] = _uniform_init(rng, d, d)
        params[f"{pre}.self.wv"] = _uniform_init(rng, d, d)
        params[f"{pre}.self.wo"] = mix_scale * _uniform_init(rng, d, d)
        params[f"{pre}.ln2_gain"] = np.ones((1, d))
        params[f"{pre}.ln2_bias"] = np.zeros((1, d))
        params[f"{pre}.w1"] = _uniform_init(rng, d, hidden)
        params[f"{pre}.b1"] = np.zeros((1, hidden))
        params[f"{pre}.w2"] = mix_scale * _uniform_init(rng, hidden, d)
        params[f"{pre}.b2"] = np.zeros((1, d))
    return ToyEncoder(
        d=d,
        layers=layers,
        grid=grid,
        heads=heads,
        params=params,
        pos_encoding=_sinusoidal_encoding(grid[0] * grid[1], d),
    )


def toy_encoder_forward_t(patches: T.Tensor, tokens: T.Tensor, encoder: ToyEncoder) -> tuple[T.Tensor, T.Tensor, T.Tensor]:
    """Run (patches | tokens) through the frozen encoder.

    Position encodings apply to patches only, so token order never matters.
    Returns (feature map rows, adapted tokens, pooled 1 x d mean).
    """
    n_patch = patches.shape[0]
    if encoder.layers == 0:
        return patches, tokens, T.tmean(patches, axis=0, keepdims=True)
    attn = AttentionParams(
        wq=encoder.params["enc0.self.wq"],
        wk=encoder.params["enc0.self.wk"],
        wv=encoder.params["enc0.self.wv"],
        wo=encoder.params["enc0.self.wo"],
        heads=encoder.heads,
    )
    p = T.lift(encoder.params)
    x = T.concat([patches + T.constant(encoder.pos_encoding), tokens], axis=0)
    for layer in range(encoder.layers):
        pre = f"enc{layer}"
        normed = T.layer_norm_rows(x, p[f"{pre}.ln1_gain"], p[f"{pre}.ln1_bias"])
        x = x + _mha_t(normed, normed, p, f"{pre}.self", attn)
        normed = T.layer_norm_rows(x, p[f"{pre}.ln2_gain"], p[f"{pre}.ln2_bias"])
        ff = T.matmul(T.tanh(T.matmul(normed, p[f"{pre}.w1"]) + p[f"{pre}.b1"]), p[f"{pre}.w2"]) + p[f"{pre}.b2"]
        x = x + ff
    rows = np.arange(n_patch + tokens.shape[0])
    map_rows = T.gather_rows(x, rows[:n_patch])
    token_rows = T.gather_rows(x, rows[n_patch:])
    pooled = T.tmean(map_rows, axis=0, keepdims=True)
    return map_rows, token_rows, pooled


def toy_encoder_forward(patch_features: np.ndarray, tokens: np.ndarray, encoder: ToyEncoder) -> EncoderOutput:
    h, w = encoder.grid
    patch2d = np.asarray(patch_features, dtype=np.float64).reshape(h * w, encoder.d)
    map_rows, token_rows, pooled = toy_encoder_forward_t(T.constant(patch2d), T.constant(tokens), encoder)
    return EncoderOutput(
        adapted_tokens=token_rows.value,
        feature_map=map_rows.value.reshape(h, w, encoder.d),
        pooled=pooled.value[0],
    )


# ---------------------------------------------------------------------------
# region pooling
# ---------------------------------------------------------------------------


def _axis_overlap(lo: float, hi: float, cells: int, extent: float) -> np.ndarray:
    """Fraction of [lo, hi] overlapping each grid cell along one axis."""
    edges = np.linspace(0.0, extent, cells + 1)
    inter = np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo)
    return np.maximum(inter, 0.0) / (hi - lo)


def _bin_axis_overlaps(lo: float, hi: float, bins: int, cells: int, extent: float) -> np.ndarray:
    """(bins x cells) overlap fractions of equal-width bins of [lo, hi]."""
    bin_edges = np.linspace(lo, hi, bins + 1)
    cell_edges = np.linspace(0.0, extent, cells + 1)
    inter = np.minimum(cell_edges[None, 1:], bin_edges[1:, None]) - np.maximum(
        cell_edges[None, :-1], bin_edges[:-1, None]
    )
    return np.maximum(inter, 0.0) * (bins / (hi - lo))


_weight_cache: dict[tuple, np.ndarray] = {}


def _box_cell_weights(box: BoundingBox, grid: tuple[int, int], image_size: tuple[float, float], p: int) -> np.ndarray:
    """Exact-area pooling weights (1 x H*W): p x p equal-area bins, each averaged
    over covered cells, then averaged; collapses to the box's area-weighted mean.

    Weights depend only on geometry, so they are memoized per box.
    """
    key = (box.x1, box.y1, box.x2, box.y2, grid, image_size, p)
    cached = _weight_cache.get(key)
    if cached is not None:
        return cached
    h_cells, w_cells = grid
    iw, ih = image_size
    x1, x2 = max(box.x1, 0.0), min(box.x2, iw)
    y1, y2 = max(box.y1, 0.0), min(box.y2, ih)
    if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
        raise DegenerateInputError(f"box degenerate after clipping to image {image_size}")
    wy = _bin_axis_overlaps(y1, y2, p, h_cells, ih)
    wx = _bin_axis_overlaps(x1, x2, p, w_cells, iw)
    # bins form a p x p grid, so the cell weight factorizes per axis
    weights = np.outer(wy.sum(axis=0), wx.sum(axis=0)).reshape(1, -1) / (p * p)
    if len(_weight_cache) > 100_000:
        _weight_cache.clear()
    _weight_cache[key] = weights
    return weights


def region_features_t(
    map_rows: T.Tensor,
    boxes: tuple[BoundingBox, BoundingBox, BoundingBox],
    grid: tuple[int, int],
    image_size: tuple[float, float] = (1.0, 1.0),
    p: int = ROI_BINS,
) -> tuple[T.Tensor, T.Tensor, T.Tensor]:
    outs = []
    for box in boxes:
        w = _box_cell_weights(box, grid, image_size, p)
        outs.append(T.matmul(T.constant(w), map_rows))
    return tuple(outs)


def region_features(
    f_img_glb: np.ndarray,
    boxes: tuple[BoundingBox, BoundingBox, BoundingBox],
    image_size: tuple[float, float] = (1.0, 1.0),
    p: int = ROI_BINS,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pool the feature map over the human, object, and union boxes.

    Each box is cut into p x p equal-area bins; every bin takes the
    area-weighted average of the cells it covers and the bin means are
    averaged, which equals the exact area average of the map over the box.
    """
    grid_map = np.asarray(f_img_glb, dtype=np.float64)
    h, w, d = grid_map.shape
    rows = T.constant(grid_map.reshape(h * w, d))
    out = region_features_t(rows, boxes, (h, w), image_size, p)
    return tuple(o.value[0] for o in out)
