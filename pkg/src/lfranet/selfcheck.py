"""Finite-difference audit of every differentiable operation and block.

Used by the ``gradcheck`` CLI command and the acceptance suite.  All checks
run in float64 on small random inputs; tolerances are 1e-4 per op/block and
1e-3 for the end-to-end tiny network.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import ops
from .attention import FocalModulation, RegionAwareAttention
from .autodiff import Tensor
from .blocks import DownsampleBlock, MSConvBlock, UpsampleBlock
from .gradcheck import finite_diff_check
from .model import ModelConfig, build_model
from .training import dice_loss

OP_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _rand(rng, shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale)


def gradient_check_suite(seed: int = 0) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    results: List[CheckResult] = []

    def check(name, f, x, tol=OP_TOLERANCE, eps=1e-5):
        results.append(CheckResult(name, finite_diff_check(f, x, eps=eps), tol))

    # convolution, w.r.t. input and weights, plain / strided / dilated
    x = _rand(rng, (2, 3, 6, 7))
    w = _rand(rng, (4, 3, 3, 3), 0.5)
    b = _rand(rng, (4,), 0.1)
    check("conv2d/x", lambda v: ops.conv2d(v, w, b, padding=1).sum(), x)
    check("conv2d/w", lambda v: ops.conv2d(x, v, b, padding=1).sum(), w)
    check("conv2d/b", lambda v: ops.conv2d(x, w, v, padding=1).sum(), b)
    check("conv2d_stride2/x", lambda v: ops.conv2d(v, w, b, stride=2, padding=1).sum(), x)
    check("conv2d_dilated/x", lambda v: ops.conv2d(v, w, b, padding=2, dilation=2).sum(), x)

    wt = _rand(rng, (3, 2, 3, 3), 0.5)
    bt = _rand(rng, (2,), 0.1)
    check("conv_transpose2d/x",
          lambda v: ops.conv_transpose2d(v, wt, bt, stride=2, padding=1, output_padding=1).sum(), x)
    check("conv_transpose2d/w",
          lambda v: ops.conv_transpose2d(x, v, bt, stride=2, padding=1, output_padding=1).sum(), wt)

    wd = _rand(rng, (3, 1, 3, 3), 0.5)
    check("depthwise/x", lambda v: ops.depthwise_conv2d(v, wd).sum(), x)
    check("depthwise/w", lambda v: ops.depthwise_conv2d(x, v).sum(), wd)

    # pooling: max needs unique in-window maxima for a valid finite difference
    xm = Tensor(rng.permutation(8 * 8).astype(np.float64).reshape(1, 1, 8, 8) * 0.1)
    check("maxpool/x", lambda v: ops.pool2d(v, "max", 2).sum(), xm)
    check("maxpool_overlap/x", lambda v: ops.pool2d(v, "max", 3, stride=2).sum(), xm)
    check("avgpool/x", lambda v: ops.pool2d(v, "avg", 2).sum(), x)
    check("avgpool_overlap/x", lambda v: ops.pool2d(v, "avg", 3, stride=2).sum(), x)
    check("global_avg_pool/x", lambda v: ops.global_avg_pool(v).sum(), x)

    gamma = _rand(rng, (3,), 0.5)
    beta = _rand(rng, (3,), 0.5)

    def bn(v, g, bb, train):
        stats = np.zeros(3), np.ones(3)
        return ops.batch_norm2d(v, g, bb, stats[0], stats[1], train=train).sum()

    xw = x * _rand(rng, x.shape)  # weighted sum so BN gradients are non-trivial
    check("batch_norm_train/x", lambda v: (ops.batch_norm2d(
        v, gamma, beta, np.zeros(3), np.ones(3), train=True) * xw.data).sum(), x)
    check("batch_norm_train/gamma", lambda v: bn(x, v, beta, True), gamma)
    check("batch_norm_train/beta", lambda v: bn(x, gamma, v, True), beta)
    check("batch_norm_infer/x", lambda v: bn(v, gamma, beta, False), x)

    # activations: keep inputs away from the kink at zero
    raw = rng.standard_normal((2, 3, 5, 5))
    xa = Tensor(np.sign(raw) * (np.abs(raw) + 0.1))
    other = _rand(rng, (2, 3, 6, 7))
    check("leaky_relu/x", lambda v: (ops.leaky_relu(v, 0.3) * xa.data).sum(), xa)
    check("relu/x", lambda v: (ops.relu(v) * xa.data).sum(), xa)
    check("sigmoid/x", lambda v: (ops.sigmoid(v) * other.data).sum(), x)
    check("dropout_infer/x", lambda v: ops.dropout(v, 0.5, train=False).sum(), x)

    scale_map = _rand(rng, (1, 3, 1, 1))
    check("concat/x", lambda v: (ops.concat_channels([v, other]) * 0.5).sum(), x)
    check("elementwise_mul/x", lambda v: ops.elementwise(v, other, "mul").sum(), x)
    check("elementwise_mul_broadcast/x", lambda v: ops.elementwise(v, scale_map, "mul").sum(), x)
    check("elementwise_add/x", lambda v: (ops.elementwise(v, other, "add") * other.data).sum(), x)
    check("upsample_nearest/x", lambda v: (ops.upsample_nearest(v, 2) * 0.25).sum(), x)
    check("group_channel_mean/x", lambda v: (ops.group_channel_mean(v, 3) * 2.0).sum(), x)
    check("slice_channels/x", lambda v: (ops.slice_channels(v, 1, 3) * 3.0).sum(), x)

    gt = Tensor((rng.random((1, 1, 6, 6)) > 0.5).astype(np.float64))
    xp = _rand(rng, (1, 1, 6, 6))
    check("dice_loss/pred", lambda v: dice_loss(ops.sigmoid(v), gt), xp)

    # composite blocks (dropout off; batch-norm exercised in train mode)
    brng = np.random.default_rng(seed + 1)
    ms = MSConvBlock(3, 4, brng, dropout_p=0.0, dtype=np.float64)
    check("ms_conv_block/x", lambda v: ms.forward(v, train=True).sum(), _rand(rng, (1, 3, 8, 8)))
    down = DownsampleBlock(3, 4, brng, dtype=np.float64)
    check("downsample_block/x", lambda v: down.forward(v, train=True).sum(), _rand(rng, (1, 3, 6, 6)))
    up = UpsampleBlock(3, 2, brng, dtype=np.float64)
    check("upsample_block/x", lambda v: up.forward(v, train=True).sum(), _rand(rng, (1, 3, 4, 4)))

    fmam = FocalModulation(4, brng, dtype=np.float64)
    check("focal_modulation/x", lambda v: fmam.forward(v).sum(), _rand(rng, (1, 4, 6, 6)))
    raam = RegionAwareAttention(3, brng, dtype=np.float64)
    check("region_attention/x", lambda v: raam.forward(v, train=True).sum(), _rand(rng, (1, 3, 8, 8)))

    # end-to-end: tiny network + dice loss
    cfg = ModelConfig(channel_plan=(2, 3, 4), dropout_p=0.0, dtype="float64", seed=seed)
    net = build_model(cfg)
    gt_img = Tensor((rng.random((1, 1, 16, 16)) > 0.7).astype(np.float64))
    xin = Tensor(rng.random((1, 3, 16, 16)))
    check("end_to_end/x", lambda v: dice_loss(net.forward(v, train=True), gt_img),
          xin, tol=END_TO_END_TOLERANCE)

    return results


def format_results(results: List[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.name:<32} max_rel_err={r.error:.3e}  tol={r.tolerance:.0e}")
    return "\n".join(lines)
