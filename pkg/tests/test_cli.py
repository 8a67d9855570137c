"""End-to-end CLI invocations on tiny synthetic fixtures."""

import json

import numpy as np
import pytest

from conftest import write_png_dataset
from lfranet import cli
from lfranet.checkpoint import load_checkpoint
from lfranet.data import load_dataset, preprocess
from lfranet.evaluation import binarize, predict_probabilities
from lfranet.synthetic import make_dataset


@pytest.fixture
def fixture_root(tmp_path):
    root = tmp_path / "data"
    write_png_dataset(root, make_dataset(3, size=48, seed=0))
    return root


@pytest.fixture
def tiny_model_config(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({"model_overrides": {"channel_plan": [2, 3, 4]}}))
    return cfg


def run_cli(*args):
    return cli.main([str(a) for a in args])


def train_args(root, out, cfg, seed=0, epochs=2):
    return ("train", "--dataset-root", root, "--out", out, "--config", cfg,
            "--seed", seed, "--epochs", epochs, "--batch-size", "2", "--image-size", "48")


class TestTrain:
    def test_smoke_run_writes_artifacts(self, fixture_root, tmp_path, tiny_model_config):
        out = tmp_path / "run"
        assert run_cli(*train_args(fixture_root, out, tiny_model_config)) == 0
        assert (out / "ckpt" / "best.ckpt").exists()
        assert (out / "logs" / "train.csv").exists()
        assert (out / "config.json").exists()
        manifest = (out / "manifest.txt").read_text()
        assert manifest.startswith("seed 0")
        assert "artifact ckpt/best.ckpt" in manifest

    def test_missing_dataset_root_no_partial_artifacts(self, tmp_path, tiny_model_config, capsys):
        out = tmp_path / "run"
        code = run_cli(*train_args(tmp_path / "nope", out, tiny_model_config))
        assert code == 1
        assert "error:" in capsys.readouterr().err
        assert not out.exists()

    def test_same_seed_byte_identical_outputs(self, fixture_root, tmp_path, tiny_model_config):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli(*train_args(fixture_root, out, tiny_model_config, seed=5)) == 0
            outs.append(out)
        log_a = (outs[0] / "logs" / "train.csv").read_bytes()
        log_b = (outs[1] / "logs" / "train.csv").read_bytes()
        assert log_a == log_b
        ckpt_a = (outs[0] / "ckpt" / "best.ckpt").read_bytes()
        ckpt_b = (outs[1] / "ckpt" / "best.ckpt").read_bytes()
        assert ckpt_a == ckpt_b

    def test_config_file_overrides_flags(self, fixture_root, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "seed": 9,
            "epochs": 1,
            "model_overrides": {"channel_plan": [2, 3, 4]},
        }))
        out = tmp_path / "run"
        assert run_cli("train", "--dataset-root", fixture_root, "--out", out,
                       "--config", cfg, "--seed", "1", "--epochs", "5",
                       "--batch-size", "2", "--image-size", "48") == 0
        assert (out / "manifest.txt").read_text().startswith("seed 9")
        assert json.loads((out / "config.json").read_text())["epochs"] == 1

    def test_unknown_config_key_rejected(self, fixture_root, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus_key": 1}))
        assert run_cli("train", "--dataset-root", fixture_root,
                       "--out", tmp_path / "o", "--config", cfg) == 1
        assert "bogus_key" in capsys.readouterr().err


@pytest.fixture
def trained(fixture_root, tmp_path, tiny_model_config):
    out = tmp_path / "trained"
    assert run_cli(*train_args(fixture_root, out, tiny_model_config, epochs=1)) == 0
    return out / "ckpt" / "best.ckpt"


class TestEvalPredict:
    def test_eval_writes_metrics(self, fixture_root, tmp_path, trained):
        out = tmp_path / "eval"
        assert run_cli("eval", "--dataset-root", fixture_root, "--checkpoint", trained,
                       "--out", out, "--image-size", "48") == 0
        csv = (out / "metrics.csv").read_text()
        assert csv.splitlines()[0] == "id,dice,jaccard,accuracy,sensitivity,specificity"
        assert len(csv.splitlines()) == 1 + 3 + 2  # header + images + mean + pooled
        assert (out / "summary.txt").exists()

    def test_eval_perfect_fixture_mean_dice_one(self, tmp_path, trained):
        # masks generated by the model itself: evaluating must give dice 1.0
        root = tmp_path / "self"
        net = load_checkpoint(trained)
        base = make_dataset(2, size=48, seed=9)
        write_png_dataset(root, base)
        loaded = [preprocess(s, 48) for s in load_dataset(root)]
        import cv2
        for s in loaded:
            pred = binarize(predict_probabilities(net, s))
            cv2.imwrite(str(root / "masks" / f"{s.id}.png"), (pred * 255).astype(np.uint8))
        out = tmp_path / "selfeval"
        assert run_cli("eval", "--dataset-root", root, "--checkpoint", trained,
                       "--out", out, "--image-size", "48") == 0
        summary = (out / "summary.txt").read_text()
        assert "mean_dice 1.000000" in summary

    def test_predict_emits_per_image_artifacts(self, fixture_root, tmp_path, trained):
        out = tmp_path / "pred"
        assert run_cli("predict", "--dataset-root", fixture_root, "--checkpoint", trained,
                       "--out", out, "--image-size", "48") == 0
        for sub in ("probabilities", "masks", "overlays"):
            files = sorted(p.name for p in (out / sub).iterdir())
            assert files == ["sample_00.png", "sample_01.png", "sample_02.png"]

    def test_corrupt_checkpoint_fails(self, fixture_root, tmp_path, trained, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(trained.read_bytes()[:-30])
        assert run_cli("eval", "--dataset-root", fixture_root, "--checkpoint", bad,
                       "--out", tmp_path / "o", "--image-size", "48") == 1
        assert "error:" in capsys.readouterr().err


class TestReports:
    def test_complexity_default_preset_in_band(self, capsys, tmp_path):
        out = tmp_path / "cx"
        assert run_cli("complexity", "--out", out) == 0
        stdout = capsys.readouterr().out
        params = int(stdout.split("params ")[1].split(" ")[0])
        assert 155_000 <= params <= 185_000
        assert (out / "complexity.txt").exists()
        assert (out / "manifest.txt").exists()

    def test_ablate_lists_ten_presets(self, capsys):
        assert run_cli("ablate") == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if "params=" in l]
        assert len(lines) == 10

    def test_gradcheck_exits_zero(self, capsys):
        assert run_cli("gradcheck") == 0
        assert "all checks passed" in capsys.readouterr().out
