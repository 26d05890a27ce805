"""Command-line entry points, run configuration, and the feature-file formats.

Feature files use the FEATMAT1 binary layout (8-byte magic, u32le rows/cols,
float32le row-major payload) with a one-name-per-line sidecar at
``<path>.names``; a CSV twin format (header row = class names) is accepted
interchangeably.  Run configuration is line-oriented ``key=value`` text with
dotted sections; every value defaults to the reference recipe.  Each command
writes its artifacts under a directory named by the hash of the resolved
configuration, rooted at $LRFA_RUN_ROOT (default ``./runs``).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import struct
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gradsuite
from . import harness as H
from .decomp import FeatureMatrix, energy_curve, pca_init, select_action_basis
from .errors import ConsistencyError, FormatError, LrfaError, NumericError, UsageError
from .harness import SyntheticConfig, TrainConfig, generate_synthetic
from .objective import LossWeights

MAGIC = b"FEATMAT1"
RUN_ROOT_ENV = "LRFA_RUN_ROOT"

# ---------------------------------------------------------------------------
# feature files
# ---------------------------------------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return Path(str(path) + ".names")


def _stable_payload(rows: np.ndarray) -> np.ndarray:
    """float32 payload that is a fixed point of the load-normalize-store cycle."""
    q = rows.astype(np.float32)
    for _ in range(8):
        norms = np.linalg.norm(q.astype(np.float64), axis=1, keepdims=True)
        q2 = (q.astype(np.float64) / norms).astype(np.float32)
        if q2.tobytes() == q.tobytes():
            break
        q = q2
    return q


def save_features(matrix: FeatureMatrix, path) -> None:
    """Write the FEATMAT1 binary plus the class-name sidecar."""
    path = Path(path)
    payload = _stable_payload(matrix.features)
    n, d = payload.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(payload.tobytes())
    lines = [f"# kind: {matrix.kind}"] + list(matrix.class_names)
    _sidecar_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_features_csv(matrix: FeatureMatrix, path) -> None:
    """CSV twin: optional kind comment, header row of names, float32-exact rows."""
    path = Path(path)
    payload = _stable_payload(matrix.features)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind: {matrix.kind}\n")
        fh.write(",".join(matrix.class_names) + "\n")
        for row in payload:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def _read_sidecar(path: Path, n_rows: int) -> tuple[list[str], str | None]:
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise ConsistencyError(f"missing sidecar {sidecar}")
    kind = None
    names = []
    for line in sidecar.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            if "kind:" in line:
                kind = line.split("kind:", 1)[1].strip()
            continue
        if line.strip():
            names.append(line.strip())
    if len(names) != n_rows:
        raise ConsistencyError(f"sidecar has {len(names)} names for {n_rows} rows")
    return names, kind


def load_features(path, kind: str | None = None) -> FeatureMatrix:
    """Read a FEATMAT1 or CSV feature file into a row-normalized FeatureMatrix."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"feature file not found: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head != MAGIC:
            if _looks_like_text(head):
                return _load_features_csv(path, kind)
            raise FormatError(f"bad magic {head!r}; expected {MAGIC!r}")
        n, d = struct.unpack("<II", fh.read(8))
        payload = fh.read()
    expected = 4 * n * d
    if len(payload) != expected:
        raise ConsistencyError(f"payload is {len(payload)} bytes; header implies {expected}")
    raw = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(raw)):
        raise NumericError("payload contains non-finite values")
    names, sidecar_kind = _read_sidecar(path, n)
    feats = raw.astype(np.float64)
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return FeatureMatrix(feats, names, kind or sidecar_kind or "hoi")


def _looks_like_text(head: bytes) -> bool:
    try:
        head.decode("utf-8")
        return True
    except UnicodeDecodeError:
        return False


def _load_features_csv(path: Path, kind: str | None) -> FeatureMatrix:
    file_kind = None
    names: list[str] | None = None
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            if "kind:" in line:
                file_kind = line.split("kind:", 1)[1].strip()
            continue
        if not line.strip():
            continue
        if names is None:
            names = [c.strip() for c in line.split(",")]
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise FormatError(f"bad CSV row: {line[:60]!r}") from exc
    if names is None or not rows:
        raise FormatError("CSV file has no header or no rows")
    raw = np.asarray(rows, dtype=np.float64).astype(np.float32)
    if raw.shape[0] != len(names):
        raise ConsistencyError(f"{raw.shape[0]} rows for {len(names)} header names")
    if not np.all(np.isfinite(raw)):
        raise NumericError("payload contains non-finite values")
    feats = raw.astype(np.float64)
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return FeatureMatrix(feats, names, kind or file_kind or "hoi")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

CONFIG_DEFAULTS: dict[str, object] = {
    "decomposition.energy_target": 0.95,
    "decomposition.k": 0,  # 0 selects ceil(m / 2)
    "loss.alpha": 80.0,
    "loss.beta1": 0.1,
    "loss.beta2": 0.1,
    "loss.beta3": 0.001,
    "loss.beta4": 50.0,
    "loss.gamma1": 2.66,
    "loss.gamma2": 2.66,
    "loss.tau_score_train": 1.0,
    "loss.tau_score_infer": 2.8,
    "loss.tau_kl": 0.1,
    "loss.focal_gamma": 2.0,
    "loss.focal_alpha": 0.25,
    "train.steps": 400,
    "train.lr": 1e-3,
    "train.seed": 0,
    "split.mode": "uv",
    "synth.n_actions": 12,
    "synth.n_objects": 8,
    "synth.n_hoi": 40,
    "synth.feature_dim": 64,
    "synth.unseen_fraction": 0.25,
    "synth.cluster_noise": 0.05,
    "synth.pairs_per_scene": 3,
    "synth.scenes": 400,
    "paths.features": "",
    "paths.action_features": "",
    "paths.object_features": "",
    "paths.priors": "",
    "paths.weights": "",
    "paths.basis": "",
}

_INT_KEYS = {
    "decomposition.k",
    "train.steps",
    "train.seed",
    "synth.n_actions",
    "synth.n_objects",
    "synth.n_hoi",
    "synth.feature_dim",
    "synth.pairs_per_scene",
    "synth.scenes",
}
_STR_KEYS = {"split.mode"} | {k for k in CONFIG_DEFAULTS if k.startswith("paths.")}


class RunConfig:
    """Resolved key=value configuration with reference-recipe defaults."""

    def __init__(self, values: dict[str, object]):
        self.values = dict(CONFIG_DEFAULTS)
        for key, value in values.items():
            if key not in CONFIG_DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            self.values[key] = value

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values: dict[str, object] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise UsageError(f"line {lineno}: expected key=value, got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in CONFIG_DEFAULTS:
                raise UsageError(f"line {lineno}: unknown config key {key!r}")
            if key in _STR_KEYS:
                values[key] = raw
            elif key in _INT_KEYS:
                try:
                    values[key] = int(raw)
                except ValueError as exc:
                    raise UsageError(f"line {lineno}: {key} expects an integer") from exc
            else:
                try:
                    values[key] = float(raw)
                except ValueError as exc:
                    raise UsageError(f"line {lineno}: {key} expects a number") from exc
        return cls(values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def __getitem__(self, key: str):
        return self.values[key]

    def canonical_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            rendered = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{key}={rendered}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    def loss_weights(self) -> LossWeights:
        v = self.values
        return LossWeights(
            alpha=v["loss.alpha"],
            beta1=v["loss.beta1"],
            beta2=v["loss.beta2"],
            beta3=v["loss.beta3"],
            beta4=v["loss.beta4"],
            gamma1=v["loss.gamma1"],
            gamma2=v["loss.gamma2"],
            tau_score_train=v["loss.tau_score_train"],
            tau_score_infer=v["loss.tau_score_infer"],
            tau_kl=v["loss.tau_kl"],
            focal_gamma=v["loss.focal_gamma"],
            focal_alpha=v["loss.focal_alpha"],
        )

    def synthetic_config(self) -> SyntheticConfig:
        v = self.values
        return SyntheticConfig(
            n_actions=v["synth.n_actions"],
            n_objects=v["synth.n_objects"],
            n_hoi=v["synth.n_hoi"],
            feature_dim=v["synth.feature_dim"],
            unseen_fraction=v["synth.unseen_fraction"],
            cluster_noise=v["synth.cluster_noise"],
            pairs_per_scene=v["synth.pairs_per_scene"],
            scenes=v["synth.scenes"],
            seed=v["train.seed"],
            split_mode=v["split.mode"],
        )

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            steps=v["train.steps"],
            lr=v["train.lr"],
            seed=v["train.seed"],
            energy_target=v["decomposition.energy_target"],
            k=v["decomposition.k"],
            loss_weights=self.loss_weights(),
            synthetic=self.synthetic_config(),
        )


def run_dir(cfg: RunConfig) -> Path:
    root = Path(os.environ.get(RUN_ROOT_ENV, "runs"))
    out = root / cfg.digest()
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".12g")


def format_eval_report(rep: H.EvalReport, vocab) -> str:
    lines = [
        f"map_seen\t{_fmt(rep.map_seen)}",
        f"map_unseen\t{_fmt(rep.map_unseen)}",
        f"map_full\t{_fmt(rep.map_full)}",
        f"harmonic_mean\t{_fmt(rep.harmonic_mean)}",
        f"hm_defined\t{int(rep.hm_defined)}",
        f"skipped_classes\t{','.join(str(c) for c in rep.skipped_classes) or '-'}",
    ]
    lines.append("class\tseen\tap")
    for c in range(vocab.n_hoi):
        ap = rep.ap_per_class[c]
        lines.append(f"{c}\t{int(vocab.seen_mask[c])}\t{_fmt(ap) if math.isfinite(ap) else 'undefined'}")
    return "\n".join(lines) + "\n"


def write_two_column(path: Path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in pairs:
            fh.write(f"{_fmt(a)}\t{_fmt(b)}\n")


def write_trace(path: Path, trace: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,cls,sem,fd,total\n")
        for row in trace:
            fh.write(f"{row['step']},{_fmt(row['cls'])},{_fmt(row['sem'])},{_fmt(row['fd'])},{_fmt(row['total'])}\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig({})
    if args.seed is not None:
        cfg = RunConfig({**cfg.values, "train.seed": args.seed})
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        parsed = RunConfig.parse(f"{key}={raw}")
        cfg = RunConfig({**cfg.values, key: parsed.values[key]})
    return cfg


def _features_for(cfg: RunConfig) -> tuple[dict, object]:
    """Either load the configured feature files or generate the synthetic set."""
    if cfg["paths.features"]:
        raise UsageError("external feature training is driven through cmd_decompose; unset paths.features")
    data = generate_synthetic(cfg.synthetic_config())
    return data.features, data


def cmd_gensynth(args) -> int:
    cfg = _load_config(args)
    data = generate_synthetic(cfg.synthetic_config())
    out = run_dir(cfg)
    for kind in ("hoi", "action", "object"):
        save_features(data.features[kind], out / f"features_{kind}.fm")
    vocab = data.vocab
    with open(out / "vocabulary.txt", "w", encoding="utf-8") as fh:
        fh.write("index\taction\tobject\tseen\n")
        for i, (a, o) in enumerate(vocab.pairs):
            fh.write(f"{i}\t{vocab.actions[a]}\t{vocab.objects[o]}\t{int(vocab.seen_mask[i])}\n")
    print(f"wrote synthetic features and vocabulary to {out}")
    return 0


def cmd_decompose(args) -> int:
    cfg = _load_config(args)
    if cfg["paths.features"]:
        features = load_features(cfg["paths.features"], kind="hoi")
    else:
        features = generate_synthetic(cfg.synthetic_config()).features["hoi"]
    out = run_dir(cfg)
    curve = energy_curve(features)
    write_two_column(out / "energy_curve.txt", [(r + 1, frac) for r, frac in enumerate(curve)])
    fac, achieved = pca_init(features, cfg["decomposition.energy_target"])
    k = cfg["decomposition.k"] or math.ceil(fac.rank / 2)
    fac = select_action_basis(fac, k, cfg["train.seed"])
    save_features(
        FeatureMatrix.from_raw(fac.weights, features.class_names, "hoi"), out / "weights.fm"
    )
    save_features(
        FeatureMatrix.from_raw(fac.basis.T, [f"basis{i:03d}" for i in range(fac.rank)], "hoi"),
        out / "basis.fm",
    )
    (out / "action_index_set.txt").write_text(
        "\n".join(str(i) for i in fac.action_index_set) + "\n", encoding="utf-8"
    )
    print(f"rank={fac.rank} achieved={_fmt(achieved)} k={k} artifacts in {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    _, data = _features_for(cfg)
    model, trace = H.train(data, cfg.train_config())
    out = run_dir(cfg)
    write_trace(out / "trace.csv", trace)
    rep = H.evaluate(model, data.eval_scenes(), data.vocab)
    (out / "eval_trained.txt").write_text(format_eval_report(rep, data.vocab), encoding="utf-8")
    save_features(
        FeatureMatrix.from_raw(model.fac.weights, data.features["hoi"].class_names, "hoi"),
        out / "weights_trained.fm",
    )
    write_two_column(out / "ad_per_object.txt", list(enumerate(rep.ad_per_object)))
    print(f"trained {cfg['train.steps']} steps; artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    """Evaluate the identity-initialized model (and its adapter-free twin)."""
    cfg = _load_config(args)
    _, data = _features_for(cfg)
    model = H.init_model(data, cfg.train_config())
    rep = H.evaluate(model, data.eval_scenes(), data.vocab)
    baseline = H.evaluate(model, data.eval_scenes(), data.vocab, use_adapters=False)
    out = run_dir(cfg)
    (out / "eval_identity.txt").write_text(format_eval_report(rep, data.vocab), encoding="utf-8")
    (out / "eval_baseline.txt").write_text(format_eval_report(baseline, data.vocab), encoding="utf-8")
    same = (out / "eval_identity.txt").read_bytes() == (out / "eval_baseline.txt").read_bytes()
    print(f"identity report matches baseline: {same}; artifacts in {out}")
    return 0


def cmd_ad(args) -> int:
    cfg = _load_config(args)
    if cfg["paths.features"]:
        features = load_features(cfg["paths.features"])
        raise UsageError("action dissimilarity needs the synthetic vocabulary; unset paths.features")
    data = generate_synthetic(cfg.synthetic_config())
    ad, flags = H.action_dissimilarity(data.features["hoi"].features, data.vocab)
    out = run_dir(cfg)
    write_two_column(out / "ad_raw.txt", list(enumerate(ad)))
    print(f"mean raw AD {_fmt(float(ad[~flags].mean()))}; artifacts in {out}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    results = gradsuite.run_all(seed=cfg["train.seed"])
    worst = 0.0
    for res in results:
        print(f"{res.name}\t{res.report.max_relative_error:.6e}\t{'pass' if res.passed else 'FAIL'}")
        worst = max(worst, res.report.max_relative_error)
    return 0 if worst < 1e-4 else 1


COMMANDS = {
    "gensynth": cmd_gensynth,
    "decompose": cmd_decompose,
    "train": cmd_train,
    "eval": cmd_eval,
    "ad": cmd_ad,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrfa",
        description="Low-rank decomposed feature adaptation: decomposition, training, and evaluation tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override train.seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except LrfaError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
