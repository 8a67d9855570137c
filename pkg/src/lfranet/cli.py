"""Command-line entry point: train / eval / predict / complexity / ablate / gradcheck.

Every command that writes artifacts also writes ``manifest.txt`` with the
seed, a hash of the effective configuration and a checksum per artifact, so
identical inputs reproduce identical outputs byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from . import backend
from .checkpoint import load_checkpoint, save_checkpoint, serialize
from .data import DATASET_SPECS, DatasetSpec, augment, load_dataset, preprocess, split_train_val
from .errors import DatasetError, InvalidConfigError
from .evaluation import binarize, evaluate_dataset, overlay_render, predict_probabilities
from .model import ABLATION_PRESETS, ModelConfig, ablation_variant, build_model, flops_estimate
from .selfcheck import format_results, gradient_check_suite
from .training import TrainConfig, fit

DEFAULT_PRESET = "R-12-Skip+F-Bottleneck"


@dataclass
class RunConfig:
    command: str
    dataset_root: Optional[str] = None
    dataset: str = "custom"
    preset: str = DEFAULT_PRESET
    out: Optional[str] = None
    seed: int = 0
    epochs: int = 50
    batch_size: int = 8
    lr: float = 0.002
    threshold: float = 0.5
    fov_only: bool = False
    checkpoint: Optional[str] = None
    image_size: Optional[int] = None
    augment_to: Optional[int] = None
    val_fraction: float = 0.8
    model_overrides: dict = dataclasses.field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the semantic configuration; filesystem locations excluded."""
        d = {k: v for k, v in self.to_dict().items()
             if k not in ("out", "dataset_root", "checkpoint")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _merge_config_file(args: argparse.Namespace) -> RunConfig:
    """Build a RunConfig from flags; values from --config override them."""
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    if getattr(args, "config", None):
        loaded = json.loads(Path(args.config).read_text())
        unknown = set(loaded) - fields
        if unknown:
            raise InvalidConfigError(f"unknown config file keys: {sorted(unknown)}")
        values.update(loaded)
    values["command"] = args.command
    return RunConfig(**values)


def _model_config(run: RunConfig) -> ModelConfig:
    cfg = ablation_variant(run.preset, seed=run.seed)
    if run.model_overrides:
        merged = cfg.to_dict()
        merged.update(run.model_overrides)
        cfg = ModelConfig.from_dict(merged)
    return cfg


def _dataset_spec(run: RunConfig, n_loaded: int) -> DatasetSpec:
    if run.dataset in DATASET_SPECS:
        spec = DATASET_SPECS[run.dataset]
        if run.image_size or run.augment_to:
            spec = dataclasses.replace(
                spec,
                target_size=run.image_size or spec.target_size,
                augmented_count=run.augment_to or spec.augmented_count,
            )
        return spec
    return DatasetSpec("custom", n_loaded, 0, (0, 0), run.image_size or 512,
                       run.augment_to or n_loaded)


def _load_preprocessed(run: RunConfig):
    root = Path(run.dataset_root or "")
    if not run.dataset_root or not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {run.dataset_root!r}")
    samples = load_dataset(root)
    spec = _dataset_spec(run, len(samples))
    return [preprocess(s, spec.target_size) for s in samples], spec


class _ArtifactWriter:
    """Collects written artifacts and emits the run manifest."""

    def __init__(self, out: Optional[str], run: RunConfig):
        self.root = Path(out) if out else None
        self.run = run
        self.entries = []

    def path(self, rel: str) -> Path:
        assert self.root is not None
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def add(self, rel: str, data: bytes) -> None:
        if self.root is None:
            return
        p = self.path(rel)
        p.write_bytes(data)
        self.entries.append((rel, hashlib.sha256(data).hexdigest()))

    def add_existing(self, rel: str) -> None:
        if self.root is None:
            return
        data = self.path(rel).read_bytes()
        self.entries.append((rel, hashlib.sha256(data).hexdigest()))

    def finish(self) -> None:
        if self.root is None:
            return
        lines = [f"seed {self.run.seed}", f"config_hash {self.run.config_hash()}"]
        for rel, digest in sorted(self.entries):
            lines.append(f"artifact {rel} {digest}")
        self.path("manifest.txt").write_text("\n".join(lines) + "\n")


def _write_png(writer: _ArtifactWriter, rel: str, rgb_or_gray: np.ndarray) -> None:
    arr = rgb_or_gray
    if arr.ndim == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_RGB2BGR)
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise RuntimeError(f"failed to encode {rel}")
    writer.add(rel, buf.tobytes())


def cmd_train(run: RunConfig) -> int:
    if not run.out:
        raise InvalidConfigError("train requires --out")
    samples, spec = _load_preprocessed(run)
    if len(samples) == 0:
        raise DatasetError("no samples to train on")
    samples = augment(samples, max(spec.augmented_count, len(samples)), run.seed)
    train, val = split_train_val(samples, run.val_fraction, run.seed)

    writer = _ArtifactWriter(run.out, run)
    net = build_model(_model_config(run))
    ckpt_rel = "ckpt/best.ckpt"
    tcfg = TrainConfig(lr=run.lr, batch_size=run.batch_size, epochs=run.epochs,
                       seed=run.seed, threshold=run.threshold,
                       checkpoint_path=str(writer.path(ckpt_rel)))
    log = fit(net, train, val, tcfg)
    writer.add_existing(ckpt_rel)
    writer.add("logs/train.csv", log.to_csv().encode())
    writer.add("config.json", json.dumps(run.to_dict(), sort_keys=True, indent=2).encode())
    writer.finish()
    final = log.records[-1] if log.records else None
    if final:
        print(f"trained {run.epochs} epochs; final train_loss={final.train_loss:.6f} "
              f"val_dice={final.val_dice:.6f}")
    print(f"artifacts under {run.out}")
    return 0


def _load_eval_inputs(run: RunConfig):
    if not run.checkpoint:
        raise InvalidConfigError("this command requires --checkpoint")
    net = load_checkpoint(run.checkpoint)
    samples, _ = _load_preprocessed(run)
    if len(samples) == 0:
        raise DatasetError("no samples to evaluate")
    return net, samples


def cmd_eval(run: RunConfig) -> int:
    net, samples = _load_eval_inputs(run)
    report = evaluate_dataset(net, samples, threshold=run.threshold, fov_mode=run.fov_only)
    writer = _ArtifactWriter(run.out, run)
    writer.add("metrics.csv", report.to_csv().encode())
    writer.add("summary.txt", report.to_summary().encode())
    writer.finish()
    print(report.to_summary(), end="")
    return 0


def cmd_predict(run: RunConfig) -> int:
    if not run.out:
        raise InvalidConfigError("predict requires --out")
    net, samples = _load_eval_inputs(run)
    writer = _ArtifactWriter(run.out, run)
    for s in samples:
        prob = predict_probabilities(net, s)
        pred = binarize(prob, run.threshold)
        _write_png(writer, f"probabilities/{s.id}.png",
                   np.clip(prob * 255.0, 0, 255).astype(np.uint8))
        _write_png(writer, f"masks/{s.id}.png", (pred * 255).astype(np.uint8))
        _write_png(writer, f"overlays/{s.id}.png", overlay_render(pred, s.mask[0], s.image))
    writer.finish()
    print(f"wrote {len(samples)} predictions under {run.out}")
    return 0


def cmd_complexity(run: RunConfig) -> int:
    cfg = _model_config(run)
    net = build_model(cfg)
    size = run.image_size or 512
    params = net.param_count()
    flops = net.flops(size, size)
    ckpt_bytes = len(serialize(net))
    lines = [
        f"preset {run.preset}",
        f"params {params} ({params / 1e6:.3f} M)",
        f"flops_{size}x{size} {flops} ({flops / 1e9:.2f} G)",
        f"checkpoint_bytes {ckpt_bytes} ({ckpt_bytes / 1e6:.2f} MB)",
    ]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    writer = _ArtifactWriter(run.out, run)
    writer.add("complexity.txt", text.encode())
    writer.finish()
    return 0


def cmd_ablate(run: RunConfig) -> int:
    rows = []
    for name in ABLATION_PRESETS:
        cfg = ablation_variant(name, seed=run.seed)
        net = build_model(cfg)
        row = f"{name:<28} params={net.param_count():>7}"
        if run.dataset_root:
            sub = dataclasses.replace(run, preset=name,
                                      out=str(Path(run.out or "ablate_runs") / name))
            cmd_train(sub)
            row += f"  trained_under={sub.out}"
        rows.append(row)
    text = "\n".join(rows) + "\n"
    print(text, end="")
    writer = _ArtifactWriter(run.out if not run.dataset_root else None, run)
    writer.add("ablation.txt", text.encode())
    writer.finish()
    return 0


def cmd_gradcheck(run: RunConfig) -> int:
    results = gradient_check_suite(seed=run.seed)
    text = format_results(results)
    print(text)
    ok = all(r.passed for r in results)
    print(f"gradcheck: {'all checks passed' if ok else 'FAILURES PRESENT'}")
    writer = _ArtifactWriter(run.out, run)
    writer.add("gradcheck.txt", (text + "\n").encode())
    writer.finish()
    return 0 if ok else 1


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "complexity": cmd_complexity,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfranet",
        description="Lightweight retinal-vessel segmentation: training, evaluation and reports.",
    )
    parser.add_argument("--version", action="version", version="lfranet 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "train a model on a dataset directory"),
        ("eval", "compute segmentation metrics for a checkpoint"),
        ("predict", "write probability maps, masks and overlays"),
        ("complexity", "print parameter/FLOP/size accounting for a preset"),
        ("ablate", "enumerate all ablation presets"),
        ("gradcheck", "run the finite-difference gradient audit"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--dataset-root", dest="dataset_root")
        p.add_argument("--dataset", choices=["drive", "stare", "chase", "custom"], default=None)
        p.add_argument("--preset", choices=list(ABLATION_PRESETS), default=None)
        p.add_argument("--config", help="JSON file whose values override flags")
        p.add_argument("--out")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--threshold", type=float, default=None)
        p.add_argument("--fov-only", dest="fov_only", action="store_true", default=None)
        p.add_argument("--checkpoint")
        p.add_argument("--image-size", dest="image_size", type=int, default=None)
        p.add_argument("--augment-to", dest="augment_to", type=int, default=None)
        p.add_argument("--val-fraction", dest="val_fraction", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _merge_config_file(args)
        print(f"[lfranet] backend={backend.BACKEND_NAME} command={run.command} seed={run.seed}",
              file=sys.stderr)
        return _COMMANDS[run.command](run)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
