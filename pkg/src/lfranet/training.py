"""Dice-loss optimization: the Adam optimizer, training loop and logging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .data import Sample
from .errors import ShapeMismatchError
from .evaluation import evaluate_dataset
from .model import LFRANet


@dataclass
class TrainConfig:
    lr: float = 0.002
    batch_size: int = 8
    epochs: int = 50
    seed: int = 0
    dice_eps: float = 1.0
    fg_weight: float = 1.0  # optional foreground emphasis; 1.0 is plain dice
    patience: Optional[int] = None
    checkpoint_path: Optional[str] = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dice_eps <= 0:
            raise ValueError(f"dice_eps must be positive, got {self.dice_eps}")


def dice_loss(pred: Tensor, gt: Tensor, epsilon: float = 1.0, fg_weight: float = 1.0) -> Tensor:
    """Soft dice loss 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).

    Sums run over every element of the batch.  ``fg_weight`` != 1 rescales
    foreground pixels in all three sums (the neutral default is plain dice).
    """
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"dice_loss shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if fg_weight != 1.0:
        wmap = (1.0 + (fg_weight - 1.0) * gt.data).astype(pred.data.dtype)
        pred = pred * wmap
        gt = Tensor(gt.data * wmap)
    intersection = (pred * gt).sum()
    denominator = pred.sum() + gt.sum() + epsilon
    return 1.0 - (2.0 * intersection + epsilon) / denominator


class Adam:
    """Bias-corrected Adam; holds first/second moments per trainable parameter."""

    def __init__(self, params, lr: float = 0.002, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        """Apply one in-place update from the accumulated gradients."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_dice: float


@dataclass
class TrainLog:
    records: List[EpochRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_dice"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.train_loss:.6f},{r.val_dice:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def fit(net: LFRANet, train: Sequence[Sample], val: Sequence[Sample],
        cfg: TrainConfig) -> TrainLog:
    """Train with seeded shuffling, dice loss and Adam; checkpoint the best val dice.

    Fully deterministic under a fixed seed: shuffling, dropout and parameter
    updates all derive from ``cfg.seed``.  Validation samples are only read.
    """
    if len(train) == 0:
        raise ValueError("fit needs a non-empty training set")
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 4]))
    net.reset_dropout_rng(cfg.seed)
    opt = Adam(net.parameters(), lr=cfg.lr)
    log = TrainLog()
    best_val = -math.inf
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train))
        losses = []
        for batch in _batches(order, cfg.batch_size):
            x = Tensor(np.stack([train[i].image for i in batch]))
            y = Tensor(np.stack([train[i].mask for i in batch]))
            pred = net.forward(x, train=True)
            loss = dice_loss(pred, y, cfg.dice_eps, cfg.fg_weight)
            net.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        train_loss = float(np.mean(losses))
        if len(val) > 0:
            val_dice = evaluate_dataset(net, val, threshold=cfg.threshold).mean.dice
        else:
            val_dice = float("nan")
        log.records.append(EpochRecord(epoch, train_loss, val_dice))
        improved = val_dice > best_val if len(val) > 0 else True
        if improved:
            best_val = val_dice
            stale = 0
            if cfg.checkpoint_path is not None:
                save_checkpoint(net, cfg.checkpoint_path)
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    return log
