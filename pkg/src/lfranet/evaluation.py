"""Thresholding, confusion statistics, segmentation metrics and overlays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, no_grad
from .data import Sample
from .errors import ShapeMismatchError
from .model import LFRANet


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsEntry:
    dice: float
    jaccard: float
    accuracy: float
    sensitivity: float
    specificity: float
    degenerate: bool = False  # any 0/0 ratio was reported as 1.0


@dataclass
class MetricsReport:
    """Per-image metrics plus their unweighted mean and the pixel-pooled variant."""

    per_image: List[Tuple[str, MetricsEntry]]
    mean: MetricsEntry
    pooled: MetricsEntry
    pooled_counts: ConfusionCounts

    def to_csv(self) -> str:
        lines = ["id,dice,jaccard,accuracy,sensitivity,specificity"]
        for name, m in self.per_image:
            lines.append(f"{name},{m.dice:.6f},{m.jaccard:.6f},{m.accuracy:.6f},"
                         f"{m.sensitivity:.6f},{m.specificity:.6f}")
        for name, m in (("mean", self.mean), ("pooled", self.pooled)):
            lines.append(f"{name},{m.dice:.6f},{m.jaccard:.6f},{m.accuracy:.6f},"
                         f"{m.sensitivity:.6f},{m.specificity:.6f}")
        return "\n".join(lines) + "\n"

    def to_summary(self) -> str:
        c = self.pooled_counts
        lines = [
            f"images {len(self.per_image)}",
            f"mean_dice {self.mean.dice:.6f}",
            f"mean_jaccard {self.mean.jaccard:.6f}",
            f"mean_accuracy {self.mean.accuracy:.6f}",
            f"mean_sensitivity {self.mean.sensitivity:.6f}",
            f"mean_specificity {self.mean.specificity:.6f}",
            f"pooled_dice {self.pooled.dice:.6f}",
            f"pooled_jaccard {self.pooled.jaccard:.6f}",
            f"pooled_counts tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}",
        ]
        return "\n".join(lines) + "\n"


def binarize(pred, threshold: float = 0.5) -> np.ndarray:
    """Threshold probabilities to {0, 1}; the boundary value maps to 1."""
    arr = pred.data if isinstance(pred, Tensor) else np.asarray(pred)
    return (arr >= threshold).astype(np.float32)


def confusion_counts(pred_bin, gt, fov: Optional[np.ndarray] = None) -> ConfusionCounts:
    """Pixel confusion counts, restricted to fov == 1 when a FOV mask is given."""
    p = np.asarray(pred_bin) > 0.5
    g = np.asarray(gt) > 0.5
    if p.shape != g.shape:
        raise ShapeMismatchError(f"confusion_counts shape mismatch: {p.shape} vs {g.shape}")
    if fov is not None:
        roi = np.asarray(fov) > 0.5
        if roi.shape != p.shape:
            raise ShapeMismatchError(f"fov shape {roi.shape} differs from prediction {p.shape}")
        p, g = p[roi], g[roi]
    return ConfusionCounts(
        tp=int(np.sum(p & g)),
        fp=int(np.sum(p & ~g)),
        fn=int(np.sum(~p & g)),
        tn=int(np.sum(~p & ~g)),
    )


def _ratio(num: int, den: int) -> Tuple[float, bool]:
    if den == 0:
        return 1.0, True
    return num / den, False


def segmentation_metrics(c: ConfusionCounts) -> MetricsEntry:
    """Dice, Jaccard, accuracy, sensitivity, specificity; 0/0 reports 1.0 (flagged)."""
    dice, d1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    jaccard, d2 = _ratio(c.tp, c.tp + c.fp + c.fn)
    accuracy, d3 = _ratio(c.tp + c.tn, c.total)
    sensitivity, d4 = _ratio(c.tp, c.tp + c.fn)
    specificity, d5 = _ratio(c.tn, c.tn + c.fp)
    return MetricsEntry(dice, jaccard, accuracy, sensitivity, specificity,
                        degenerate=d1 or d2 or d3 or d4 or d5)


def _mean_entry(entries: Sequence[MetricsEntry]) -> MetricsEntry:
    return MetricsEntry(
        dice=float(np.mean([e.dice for e in entries])),
        jaccard=float(np.mean([e.jaccard for e in entries])),
        accuracy=float(np.mean([e.accuracy for e in entries])),
        sensitivity=float(np.mean([e.sensitivity for e in entries])),
        specificity=float(np.mean([e.specificity for e in entries])),
        degenerate=any(e.degenerate for e in entries),
    )


def predict_probabilities(net: LFRANet, sample: Sample) -> np.ndarray:
    """Single-image inference; returns the [H, W] probability map."""
    with no_grad():
        out = net.forward(Tensor(sample.image[None]), train=False)
    return out.data[0, 0]


def evaluate_dataset(net: LFRANet, samples: Sequence[Sample], threshold: float = 0.5,
                     fov_mode: bool = False) -> MetricsReport:
    """Per-image metrics, their unweighted mean, and pixel-pooled metrics."""
    if len(samples) == 0:
        raise ValueError("evaluate_dataset needs a non-empty sample list")
    per_image = []
    pooled = ConfusionCounts(0, 0, 0, 0)
    for s in samples:
        prob = predict_probabilities(net, s)
        pred = binarize(prob, threshold)
        fov = s.fov[0] if (fov_mode and s.fov is not None) else None
        counts = confusion_counts(pred, s.mask[0], fov)
        per_image.append((s.id, segmentation_metrics(counts)))
        pooled = pooled + counts
    return MetricsReport(
        per_image=per_image,
        mean=_mean_entry([m for _, m in per_image]),
        pooled=segmentation_metrics(pooled),
        pooled_counts=pooled,
    )


# Overlay colors (RGB): true positives green, false positives blue, false
# negatives red (an extension; strict mode leaves them as base image).
TP_COLOR = (0, 255, 0)
FP_COLOR = (0, 0, 255)
FN_COLOR = (255, 0, 0)


def overlay_render(pred_bin, gt, base_image, strict: bool = False) -> np.ndarray:
    """RGB overlay of a prediction against ground truth over the base image."""
    p = np.asarray(pred_bin) > 0.5
    g = np.asarray(gt) > 0.5
    if p.ndim == 3:
        p = p[0]
    if g.ndim == 3:
        g = g[0]
    if p.shape != g.shape:
        raise ShapeMismatchError(f"overlay shape mismatch: {p.shape} vs {g.shape}")
    base = np.asarray(base_image)
    if base.ndim == 3:  # [C,H,W] -> [H,W,3]
        base = base.transpose(1, 2, 0)
        if base.shape[2] == 1:
            base = np.repeat(base, 3, axis=2)
    else:
        base = np.stack([base] * 3, axis=-1)
    if base.shape[:2] != p.shape:
        raise ShapeMismatchError(f"base image extents {base.shape[:2]} differ from masks {p.shape}")
    out = np.clip(base * 255.0, 0, 255).astype(np.uint8)
    out[p & g] = TP_COLOR
    out[p & ~g] = FP_COLOR
    if not strict:
        out[~p & g] = FN_COLOR
    return out
