"""The two attention mechanisms: focal modulation and region-aware attention.

Focal modulation aggregates a stack of depthwise-convolution context levels
plus a global pooled level, gates them per spatial position, and modulates a
query projection of the input.  Region-aware attention derives a single
spatial attention map from cascaded max/avg pooling products and grouped
cross-channel averages, then rescales the skip tensor by it.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .autodiff import Tensor
from .blocks import BatchNorm2d, Conv2d, DepthwiseConv2d
from .errors import ShapeMismatchError
from .module import Module


class FocalModulation(Module):
    """Gated hierarchical context aggregation followed by query modulation.

    ``levels`` depthwise layers (kernel sizes ``kernels``) build progressively
    wider contexts z_1..z_L from a 1x1 value projection of the input; level
    L+1 is the global average of z_L.  A 1x1 projection of the input yields
    one single-channel gate map per level; the gated sum is projected by h
    and multiplied with the query projection q of the input.
    """

    def __init__(self, channels, rng, levels=2, kernels=(3, 5), slope=0.3, dtype=np.float32):
        super().__init__()
        if len(kernels) != levels:
            raise ValueError(f"need one kernel size per level, got {kernels} for {levels} levels")
        self.channels, self.levels, self.slope = channels, levels, slope
        self.value_proj = Conv2d(channels, channels, 1, rng, slope=slope, dtype=dtype)
        for i, k in enumerate(kernels):
            setattr(self, f"dw{i + 1}", DepthwiseConv2d(channels, k, rng, slope=slope, dtype=dtype))
        self.kernels = tuple(kernels)
        self.gate_proj = Conv2d(channels, levels + 1, 1, rng, slope=slope, dtype=dtype)
        self.q = Conv2d(channels, channels, 1, rng, slope=slope, dtype=dtype)
        self.h = Conv2d(channels, channels, 1, rng, slope=slope, dtype=dtype)

    def context_maps(self, x: Tensor):
        """Return ([z_1 .. z_L, z_{L+1}], gates); z_{L+1} is the pooled level."""
        z = self.value_proj.forward(x)
        zs = []
        for i in range(self.levels):
            z = ops.leaky_relu(getattr(self, f"dw{i + 1}").forward(z), self.slope)
            zs.append(z)
        zs.append(ops.global_avg_pool(zs[-1]))
        return zs, self.gate_proj.forward(x)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeMismatchError(f"focal modulation expects {self.channels} channels, got {x.shape}")
        zs, gates = self.context_maps(x)
        zout = None
        for level, z in enumerate(zs):
            term = ops.slice_channels(gates, level, level + 1) * z
            zout = term if zout is None else zout + term
        return self.q.forward(x) * self.h.forward(zout)

    def flops(self, h: int, w: int) -> int:
        total = self.value_proj.flops(h, w)
        for i, k in enumerate(self.kernels):
            total += getattr(self, f"dw{i + 1}").flops(h, w) + self.channels * h * w
        total += self.gate_proj.flops(h, w) + self.q.flops(h, w) + self.h.flops(h, w)
        # gated sum and final modulation products, one op per element
        total += (2 * (self.levels + 1) + 1) * self.channels * h * w
        return total


class RegionAwareAttention(Module):
    """Spatial attention for skip connections from pooled feature statistics.

    The skip tensor is first projected to ``groups * group_channels`` (2 * 16)
    channels by a 3x3 conv + BN + ReLU.  Cascaded 4x4 then 2x2 max and average
    pools (stride = kernel) are multiplied, reduced to one map per channel
    group, weighted by equally-pooled per-group channel means, and averaged
    into a single map, which is nearest-upsampled x8 and multiplied into the
    skip tensor.
    """

    POOL_FACTOR = 8  # 4x4 then 2x2, stride = kernel

    def __init__(self, in_ch, rng, groups=2, group_channels=16, slope=0.3, dtype=np.float32):
        super().__init__()
        self.in_ch, self.groups, self.group_channels = in_ch, groups, group_channels
        mid = groups * group_channels
        self.pre_conv = Conv2d(in_ch, mid, 3, rng, padding=1, slope=slope, dtype=dtype)
        self.bn = BatchNorm2d(mid, dtype=dtype)

    def attention_map(self, m: Tensor) -> Tensor:
        """Reduce the projected feature map [N,32,H,W] to one [N,1,H/8,W/8] map."""
        mid = self.groups * self.group_channels
        if m.shape[1] != mid:
            raise ShapeMismatchError(f"attention_map expects {mid} channels, got {m.shape}")
        _, _, h, w = m.shape
        f = self.POOL_FACTOR
        if h % f or w % f:
            raise ShapeMismatchError(f"attention_map needs extents divisible by {f}, got {(h, w)}")
        m1 = ops.pool2d(ops.pool2d(m, "max", 4), "max", 2)
        m2 = ops.pool2d(ops.pool2d(m, "avg", 4), "avg", 2)
        s = m1 * m2
        s_groups = ops.group_channel_mean(s, self.groups)
        ca = ops.group_channel_mean(m, self.groups)
        ca = ops.pool2d(ops.pool2d(ca, "avg", 4), "avg", 2)
        return ops.group_channel_mean(s_groups * ca, 1)

    def forward(self, skip: Tensor, train: bool = False) -> Tensor:
        m = ops.relu(self.bn.forward(self.pre_conv.forward(skip), train))
        att = self.attention_map(m)
        att_up = ops.upsample_nearest(att, self.POOL_FACTOR)
        return skip * att_up

    def flops(self, h: int, w: int) -> int:
        mid = self.groups * self.group_channels
        total = self.pre_conv.flops(h, w) + self.bn.flops(h, w) + mid * h * w
        # pooling chains (one op per input element per stage) and map algebra
        total += 2 * (mid * h * w + mid * (h // 4) * (w // 4))
        total += self.groups * (h * w + (h // 4) * (w // 4))
        small = (h // 8) * (w // 8)
        total += (mid + 2 * self.groups + 1) * small
        total += self.in_ch * h * w  # final rescale of the skip tensor
        return total
