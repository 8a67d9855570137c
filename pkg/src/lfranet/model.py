"""LFRA-Net assembly: encoder-decoder wiring, ablation presets, complexity.

The encoder stacks three multiscale blocks, each followed by a 2x2 stride-2
downsampling block, so the bottleneck sits at 1/8 resolution.  The decoder
mirrors it with three (multiscale block + transposed-conv upsample) stages;
after each upsample the matching encoder skip is concatenated, optionally
routed through region-aware attention.  Focal modulation sits at the
bottleneck.  A final multiscale block and 1x1 convolution + sigmoid produce
the vessel probability map at input resolution.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import ops
from .attention import FocalModulation, RegionAwareAttention
from .autodiff import Tensor
from .blocks import Conv2d, DownsampleBlock, MSConvBlock, UpsampleBlock
from .errors import InvalidConfigError, ShapeMismatchError
from .module import Module


@dataclass
class ModelConfig:
    """Complete architectural description: any ablation variant is a config."""

    in_channels: int = 3
    base_width: int = 8
    channel_plan: Optional[Tuple[int, int, int]] = None  # defaults to (b, 2b, 4b)
    bottleneck_width: Optional[int] = None  # defaults to the last plan entry
    dilation: int = 2
    dropout_p: float = 0.5
    raam_skips: Tuple[int, ...] = (1, 2)
    fmam_bottleneck: bool = True
    fmam_skips: bool = False
    skips_enabled: bool = True
    multiscale: bool = True
    leaky_slope: float = 0.3
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.channel_plan is None:
            b = self.base_width
            self.channel_plan = (b, 2 * b, 4 * b)
        self.channel_plan = tuple(int(c) for c in self.channel_plan)
        if len(self.channel_plan) != 3 or any(c < 1 for c in self.channel_plan):
            raise InvalidConfigError(f"channel_plan must be three positive ints, got {self.channel_plan}")
        if self.bottleneck_width is None:
            self.bottleneck_width = self.channel_plan[-1]
        if self.bottleneck_width < 1:
            raise InvalidConfigError(f"bottleneck_width must be positive, got {self.bottleneck_width}")
        self.raam_skips = tuple(sorted(set(int(i) for i in self.raam_skips)))
        if not set(self.raam_skips) <= {1, 2, 3}:
            raise InvalidConfigError(f"raam_skips must be a subset of {{1,2,3}}, got {self.raam_skips}")
        if self.raam_skips and not self.skips_enabled:
            raise InvalidConfigError("raam_skips requires skips_enabled")
        if self.fmam_skips and not self.skips_enabled:
            raise InvalidConfigError("fmam_skips requires skips_enabled")
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.dilation < 1:
            raise InvalidConfigError(f"dilation must be >= 1, got {self.dilation}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channel_plan"] = list(self.channel_plan)
        d["raam_skips"] = list(self.raam_skips)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channel_plan"] = tuple(d["channel_plan"])
        d["raam_skips"] = tuple(d["raam_skips"])
        return cls(**d)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


# Ablation presets; the last entry is the reference configuration.
ABLATION_PRESETS = {
    "LU-NS": dict(multiscale=False, skips_enabled=False, raam_skips=(), fmam_bottleneck=False),
    "MLU-NS": dict(skips_enabled=False, raam_skips=(), fmam_bottleneck=False),
    "MLU": dict(raam_skips=(), fmam_bottleneck=False),
    "F-Skip": dict(raam_skips=(), fmam_bottleneck=False, fmam_skips=True),
    "R-Skip": dict(raam_skips=(1, 2, 3), fmam_bottleneck=False),
    "R-Skip+F-Bottleneck": dict(raam_skips=(1, 2, 3)),
    "F-Bottleneck": dict(raam_skips=()),
    "R-13-Skip+F-Bottleneck": dict(raam_skips=(1, 3)),
    "R-23-Skip+F-Bottleneck": dict(raam_skips=(2, 3)),
    "R-12-Skip+F-Bottleneck": dict(raam_skips=(1, 2)),
}


def ablation_variant(name: str, seed: int = 0) -> ModelConfig:
    if name not in ABLATION_PRESETS:
        raise InvalidConfigError(
            f"unknown preset {name!r}; valid presets: {', '.join(ABLATION_PRESETS)}"
        )
    return ModelConfig(seed=seed, **ABLATION_PRESETS[name])


class LFRANet(Module):
    """The segmentation network; maps [N,3,H,W] to vessel probabilities [N,1,H,W]."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        dt = cfg.np_dtype
        c1, c2, c3 = cfg.channel_plan
        cb = cfg.bottleneck_width
        slope = cfg.leaky_slope
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))

        def ms(cin, cout):
            return MSConvBlock(cin, cout, rng, dilation=cfg.dilation, dropout_p=cfg.dropout_p,
                               slope=slope, multiscale=cfg.multiscale, dtype=dt)

        self.enc_ms1 = ms(cfg.in_channels, c1)
        self.enc_down1 = DownsampleBlock(c1, c1, rng, slope=slope, dtype=dt)
        self.enc_ms2 = ms(c1, c2)
        self.enc_down2 = DownsampleBlock(c2, c2, rng, slope=slope, dtype=dt)
        self.enc_ms3 = ms(c2, c3)
        self.enc_down3 = DownsampleBlock(c3, cb, rng, slope=slope, dtype=dt)

        if cfg.fmam_bottleneck:
            self.fmam = FocalModulation(cb, rng, slope=slope, dtype=dt)

        skip_ch = {1: c1, 2: c2, 3: c3}
        for i in (1, 2, 3):
            if cfg.skips_enabled and i in cfg.raam_skips:
                setattr(self, f"raam{i}", RegionAwareAttention(skip_ch[i], rng, slope=slope, dtype=dt))
            elif cfg.skips_enabled and cfg.fmam_skips:
                setattr(self, f"fmam_skip{i}", FocalModulation(skip_ch[i], rng, slope=slope, dtype=dt))

        join = 2 if cfg.skips_enabled else 1
        self.dec_ms3 = ms(cb, c3)
        self.dec_up3 = UpsampleBlock(c3, c3, rng, slope=slope, dtype=dt)
        self.dec_ms2 = ms(join * c3, c2)
        self.dec_up2 = UpsampleBlock(c2, c2, rng, slope=slope, dtype=dt)
        self.dec_ms1 = ms(join * c2, c1)
        self.dec_up1 = UpsampleBlock(c1, c1, rng, slope=slope, dtype=dt)
        self.head_ms = ms(join * c1, c1)
        self.head_conv = Conv2d(c1, 1, 1, rng, slope=slope, dtype=dt)

        self.assign_parameter_names()
        self.reset_dropout_rng(cfg.seed)

    # -- execution ------------------------------------------------------------

    def reset_dropout_rng(self, seed: int) -> None:
        """Restart the dropout stream; training loops call this for reproducibility."""
        self.dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeMismatchError(
                f"expected input [N,{self.config.in_channels},H,W], got {x.shape}"
            )
        _, _, h, w = x.shape
        if h % 8 or w % 8:
            raise ShapeMismatchError(f"input extents must be divisible by 8, got {(h, w)}")

    def encode(self, x: Tensor, train: bool = False, rng=None):
        s1 = self.enc_ms1.forward(x, train, rng)
        s2 = self.enc_ms2.forward(self.enc_down1.forward(s1, train), train, rng)
        s3 = self.enc_ms3.forward(self.enc_down2.forward(s2, train), train, rng)
        c_enc = self.enc_down3.forward(s3, train)
        return s1, s2, s3, c_enc

    def _skip(self, value: Tensor, index: int, train: bool) -> Optional[Tensor]:
        cfg = self.config
        if not cfg.skips_enabled:
            return None
        if index in cfg.raam_skips:
            return getattr(self, f"raam{index}").forward(value, train)
        if cfg.fmam_skips:
            return getattr(self, f"fmam_skip{index}").forward(value, train)
        return value

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        self._check_input(x)
        rng = self.dropout_rng if train else None
        s1, s2, s3, c_enc = self.encode(x, train, rng)
        d = self.fmam.forward(c_enc, train) if self.config.fmam_bottleneck else c_enc

        for index, skip in ((3, s3), (2, s2), (1, s1)):
            ms = getattr(self, f"dec_ms{index}")
            up = getattr(self, f"dec_up{index}")
            d = up.forward(ms.forward(d, train, rng), train)
            gated = self._skip(skip, index, train)
            if gated is not None:
                d = ops.concat_channels([gated, d])
        return ops.sigmoid(self.head_conv.forward(self.head_ms.forward(d, train, rng)))

    # -- complexity accounting -------------------------------------------------

    def flops(self, h: int, w: int) -> int:
        """Inference FLOPs at multiply-add = 2; BN/activations/pools at 1 op/element."""
        if h % 8 or w % 8:
            raise ShapeMismatchError(f"extents must be divisible by 8, got {(h, w)}")
        cfg = self.config
        total = self.enc_ms1.flops(h, w) + self.enc_down1.flops(h, w)
        total += self.enc_ms2.flops(h // 2, w // 2) + self.enc_down2.flops(h // 2, w // 2)
        total += self.enc_ms3.flops(h // 4, w // 4) + self.enc_down3.flops(h // 4, w // 4)
        if cfg.fmam_bottleneck:
            total += self.fmam.flops(h // 8, w // 8)
        skip_hw = {1: (h, w), 2: (h // 2, w // 2), 3: (h // 4, w // 4)}
        for i in (1, 2, 3):
            if hasattr(self, f"raam{i}"):
                total += getattr(self, f"raam{i}").flops(*skip_hw[i])
            elif hasattr(self, f"fmam_skip{i}"):
                total += getattr(self, f"fmam_skip{i}").flops(*skip_hw[i])
        stage_hw = {3: (h // 8, w // 8), 2: (h // 4, w // 4), 1: (h // 2, w // 2)}
        for i in (3, 2, 1):
            sh, sw = stage_hw[i]
            total += getattr(self, f"dec_ms{i}").flops(sh, sw)
            total += getattr(self, f"dec_up{i}").flops(sh, sw)
        total += self.head_ms.flops(h, w) + self.head_conv.flops(h, w) + h * w  # + sigmoid
        return int(total)


def build_model(cfg: ModelConfig) -> LFRANet:
    """Construct a network; equal seeds give bit-identical initial parameters."""
    return LFRANet(cfg)


def param_count(net: LFRANet) -> int:
    return net.param_count()


def flops_estimate(cfg: ModelConfig, extents: Tuple[int, int] = (512, 512)) -> int:
    """Analytic inference FLOPs for a config at the given input extents."""
    return build_model(cfg).flops(*extents)
