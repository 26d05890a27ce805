import os
import struct
import subprocess
import sys

import numpy as np
import pytest

from lrfa import cli
from lrfa.decomp import FeatureMatrix
from lrfa.errors import ConsistencyError, FormatError, UsageError


def unit_features(rng, n, d, kind="hoi"):
    x = rng.normal(size=(n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return FeatureMatrix(x, [f"class{i}" for i in range(n)], kind)


def run_cli(args, tmp_path):
    env = dict(os.environ, LRFA_RUN_ROOT=str(tmp_path / "runs"))
    return subprocess.run(
        [sys.executable, "-m", "lrfa.cli", *args], capture_output=True, text=True, env=env
    )


class TestFeatureFiles:
    def test_roundtrip_is_stable(self, tmp_path):
        rng = np.random.default_rng(0)
        fm = unit_features(rng, 7, 5, "action")
        path = tmp_path / "probe.fm"
        cli.save_features(fm, path)
        r1 = cli.load_features(path)
        cli.save_features(r1, path)
        r2 = cli.load_features(path)
        assert r1.features.tobytes() == r2.features.tobytes()
        assert r1.class_names == fm.class_names
        assert r1.kind == "action"

    def test_payload_bytes_stable_under_rewrite(self, tmp_path):
        rng = np.random.default_rng(1)
        fm = unit_features(rng, 4, 6)
        p1, p2 = tmp_path / "a.fm", tmp_path / "b.fm"
        cli.save_features(fm, p1)
        cli.save_features(cli.load_features(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fm"
        path.write_bytes(b"\x00\x01\x02\x03NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError):
            cli.load_features(path)

    def test_truncated_payload_names_byte_counts(self, tmp_path):
        path = tmp_path / "trunc.fm"
        with open(path, "wb") as fh:
            fh.write(cli.MAGIC)
            fh.write(struct.pack("<II", 3, 4))
            fh.write(b"\x00" * 20)  # needs 48
        (tmp_path / "trunc.fm.names").write_text("a\nb\nc\n")
        with pytest.raises(ConsistencyError) as exc:
            cli.load_features(path)
        assert "20" in str(exc.value) and "48" in str(exc.value)

    def test_nan_payload_rejected(self, tmp_path):
        path = tmp_path / "nan.fm"
        data = np.full((2, 2), np.nan, dtype="<f4")
        with open(path, "wb") as fh:
            fh.write(cli.MAGIC)
            fh.write(struct.pack("<II", 2, 2))
            fh.write(data.tobytes())
        (tmp_path / "nan.fm.names").write_text("a\nb\n")
        with pytest.raises(Exception):
            cli.load_features(path)

    def test_sidecar_count_mismatch(self, tmp_path):
        rng = np.random.default_rng(2)
        fm = unit_features(rng, 3, 3)
        path = tmp_path / "m.fm"
        cli.save_features(fm, path)
        (tmp_path / "m.fm.names").write_text("only_one\n")
        with pytest.raises(ConsistencyError):
            cli.load_features(path)

    def test_csv_twin_parses_to_same_matrix(self, tmp_path):
        rng = np.random.default_rng(3)
        fm = unit_features(rng, 5, 4, "object")
        bin_path, csv_path = tmp_path / "t.fm", tmp_path / "t.csv"
        cli.save_features(fm, bin_path)
        cli.save_features_csv(fm, csv_path)
        a = cli.load_features(bin_path)
        b = cli.load_features(csv_path)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.class_names == b.class_names
        assert b.kind == "object"

    def test_kind_flag_overrides_sidecar(self, tmp_path):
        rng = np.random.default_rng(4)
        fm = unit_features(rng, 2, 3, "hoi")
        path = tmp_path / "k.fm"
        cli.save_features(fm, path)
        assert cli.load_features(path, kind="action").kind == "action"


class TestRunConfig:
    def test_defaults_present(self):
        cfg = cli.RunConfig({})
        assert cfg["loss.alpha"] == 80.0
        assert cfg["loss.beta4"] == 50.0
        assert cfg["train.lr"] == 1e-3
        assert cfg["split.mode"] == "uv"

    def test_parse_overrides(self):
        cfg = cli.RunConfig.parse("train.steps = 12\nloss.alpha=3.5\nsplit.mode=uo\n# comment\n")
        assert cfg["train.steps"] == 12
        assert cfg["loss.alpha"] == 3.5
        assert cfg["split.mode"] == "uo"

    def test_unknown_key_rejected(self):
        with pytest.raises(UsageError):
            cli.RunConfig.parse("loss.bogus=1\n")

    def test_digest_changes_iff_value_changes(self):
        base = cli.RunConfig({})
        same = cli.RunConfig.parse("train.steps=400\n")  # equals the default
        changed = cli.RunConfig.parse("train.steps=401\n")
        assert base.digest() == same.digest()
        assert base.digest() != changed.digest()

    def test_type_errors(self):
        with pytest.raises(UsageError):
            cli.RunConfig.parse("train.steps=abc\n")
        with pytest.raises(UsageError):
            cli.RunConfig.parse("loss.alpha=xyz\n")

    def test_loss_weights_mapping(self):
        cfg = cli.RunConfig.parse("loss.tau_kl=0.2\n")
        assert cfg.loss_weights().tau_kl == 0.2


class TestCommands:
    def test_gensynth_writes_artifacts(self, tmp_path):
        r = run_cli(["gensynth", "--set", "synth.scenes=8"], tmp_path)
        assert r.returncode == 0, r.stderr
        runs = list((tmp_path / "runs").iterdir())
        assert len(runs) == 1
        names = {p.name for p in runs[0].iterdir()}
        assert {"features_hoi.fm", "features_action.fm", "features_object.fm", "vocabulary.txt"} <= names

    def test_decompose_energy_grid_monotone(self, tmp_path):
        ranks = []
        for target in ("0.80", "0.90", "0.95", "0.98"):
            r = run_cli(
                ["decompose", "--set", "synth.scenes=8", "--set", f"decomposition.energy_target={target}"],
                tmp_path,
            )
            assert r.returncode == 0, r.stderr
            ranks.append(int(r.stdout.split("rank=")[1].split()[0]))
        assert ranks == sorted(ranks)

    def test_decompose_artifacts_deterministic(self, tmp_path):
        args = ["decompose", "--set", "synth.scenes=8"]
        r1 = run_cli(args, tmp_path)
        run_dir = next((tmp_path / "runs").iterdir())
        first = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        r2 = run_cli(args, tmp_path)
        second = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        assert r1.returncode == 0 and r2.returncode == 0
        assert first == second

    def test_decompose_exact_rank_curve(self, tmp_path):
        r = run_cli(
            ["decompose", "--set", "synth.scenes=8", "--set", "decomposition.energy_target=1.0"],
            tmp_path,
        )
        assert r.returncode == 0, r.stderr
        run_dir = next((tmp_path / "runs").iterdir())
        curve = [line.split("\t") for line in (run_dir / "energy_curve.txt").read_text().splitlines()]
        assert float(curve[-1][1]) == pytest.approx(1.0)

    def test_missing_config_file_usage_error(self, tmp_path):
        r = run_cli(["train", "--config", str(tmp_path / "nope.cfg")], tmp_path)
        assert r.returncode == 3
        assert r.stderr.startswith("error: io:")

    def test_unknown_key_is_single_line_error(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("loss.nonsense=1\n")
        r = run_cli(["train", "--config", str(cfg)], tmp_path)
        assert r.returncode == 2
        assert r.stderr.startswith("error: usage:")
        assert len(r.stderr.strip().splitlines()) == 1

    def test_train_eval_deterministic_reports(self, tmp_path):
        args = [
            "train", "--seed", "5",
            "--set", "synth.scenes=16", "--set", "train.steps=8",
        ]
        r1 = run_cli(args, tmp_path)
        assert r1.returncode == 0, r1.stderr
        run_dir = next((tmp_path / "runs").iterdir())
        first = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        r2 = run_cli(args, tmp_path)
        second = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        assert first == second

    def test_eval_identity_matches_baseline(self, tmp_path):
        r = run_cli(["eval", "--set", "synth.scenes=16", "--set", "train.steps=0"], tmp_path)
        assert r.returncode == 0, r.stderr
        assert "matches baseline: True" in r.stdout
        run_dir = next((tmp_path / "runs").iterdir())
        assert (run_dir / "eval_identity.txt").read_bytes() == (run_dir / "eval_baseline.txt").read_bytes()

    def test_ad_command_matches_in_process(self, tmp_path):
        from lrfa import harness as H

        r = run_cli(["ad", "--set", "synth.scenes=8"], tmp_path)
        assert r.returncode == 0, r.stderr
        run_dir = next((tmp_path / "runs").iterdir())
        rows = [line.split("\t") for line in (run_dir / "ad_raw.txt").read_text().splitlines()]
        cfg = cli.RunConfig.parse("synth.scenes=8\n")
        data = H.generate_synthetic(cfg.synthetic_config())
        ad, _ = H.action_dissimilarity(data.features["hoi"].features, data.vocab)
        for (idx, value), expected in zip(rows, ad):
            assert float(value) == pytest.approx(expected, rel=1e-10)

    def test_gradcheck_command_exits_zero(self, tmp_path):
        r = run_cli(["gradcheck"], tmp_path)
        assert r.returncode == 0, r.stderr
        lines = [l for l in r.stdout.strip().splitlines() if l]
        assert len(lines) == 12
        assert all("pass" in l for l in lines)
