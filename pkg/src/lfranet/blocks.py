"""Composite building blocks: multiscale convolution, downsampling, upsampling.

The multiscale block fuses parallel 1x1 / 3x3 / dilated-3x3 branches; the
down/up blocks move between resolution stages by exactly a factor of two.
Every block preserves its contract in both float32 (training) and float64
(gradient checking) builds.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import ops
from .autodiff import Parameter, Tensor
from .module import Module


def he_normal(rng: np.random.Generator, shape, fan_in: int, slope: float, dtype) -> np.ndarray:
    """Kaiming-normal init adjusted for the leaky-ReLU negative slope."""
    std = np.sqrt(2.0 / ((1.0 + slope * slope) * fan_in))
    return (rng.standard_normal(shape) * std).astype(dtype)


def _conv_macs(k: int, cin: int, cout: int, oh: int, ow: int) -> int:
    """FLOPs of a k x k convolution at multiply-add = 2 ops."""
    return 2 * k * k * cin * cout * oh * ow


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=0, dilation=1,
                 bias=True, slope=0.3, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.stride, self.padding, self.dilation = stride, padding, dilation
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(he_normal(rng, (out_ch, in_ch, kernel, kernel), fan_in, slope, dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          padding=self.padding, dilation=self.dilation)

    def out_hw(self, h: int, w: int) -> tuple:
        k, s, p, d = self.kernel, self.stride, self.padding, self.dilation
        return ((h + 2 * p - d * (k - 1) - 1) // s + 1,
                (w + 2 * p - d * (k - 1) - 1) // s + 1)

    def flops(self, h: int, w: int) -> int:
        oh, ow = self.out_hw(h, w)
        return _conv_macs(self.kernel, self.in_ch, self.out_ch, oh, ow)


class ConvTranspose2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=2, padding=1, output_padding=1,
                 bias=True, slope=0.3, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.kernel = in_ch, out_ch, kernel
        self.stride, self.padding, self.output_padding = stride, padding, output_padding
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(he_normal(rng, (in_ch, out_ch, kernel, kernel), fan_in, slope, dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride,
                                    padding=self.padding, output_padding=self.output_padding)

    def out_hw(self, h: int, w: int) -> tuple:
        k, s, p, op = self.kernel, self.stride, self.padding, self.output_padding
        return ((h - 1) * s - 2 * p + k + op, (w - 1) * s - 2 * p + k + op)

    def flops(self, h: int, w: int) -> int:
        # counted on the equivalent forward convolution: one MAC set per input position
        return _conv_macs(self.kernel, self.in_ch, self.out_ch, h, w)


class DepthwiseConv2d(Module):
    def __init__(self, channels, kernel, rng, bias=True, slope=0.3, dtype=np.float32):
        super().__init__()
        self.channels, self.kernel = channels, kernel
        self.weight = Parameter(he_normal(rng, (channels, 1, kernel, kernel),
                                          kernel * kernel, slope, dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.weight, self.bias)

    def flops(self, h: int, w: int) -> int:
        return 2 * self.kernel * self.kernel * self.channels * h * w


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ops.batch_norm2d(x, self.gamma, self.beta, self.running_mean,
                                self.running_var, train, self.eps, self.momentum)

    def flops(self, h: int, w: int) -> int:
        return self.channels * h * w


class MSConvBlock(Module):
    """Parallel 1x1 / 3x3 / dilated-3x3 branches, fused by a 3x3 convolution.

    Each stage applies batch norm, then dropout, then leaky ReLU, in that
    order.  With ``multiscale=False`` the block degrades to a single 3x3
    branch (the plain lightweight-U-Net configuration).
    """

    def __init__(self, in_ch, out_ch, rng, dilation=2, dropout_p=0.5, slope=0.3,
                 multiscale=True, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.dropout_p, self.slope, self.multiscale = dropout_p, slope, multiscale
        self.branch3 = Conv2d(in_ch, out_ch, 3, rng, padding=1, slope=slope, dtype=dtype)
        if multiscale:
            self.branch1 = Conv2d(in_ch, out_ch, 1, rng, slope=slope, dtype=dtype)
            self.branch_dil = Conv2d(in_ch, out_ch, 3, rng, padding=dilation,
                                     dilation=dilation, slope=slope, dtype=dtype)
            concat_ch = 3 * out_ch
        else:
            concat_ch = out_ch
        self.bn_concat = BatchNorm2d(concat_ch, dtype=dtype)
        self.fuse = Conv2d(concat_ch, out_ch, 3, rng, padding=1, slope=slope, dtype=dtype)
        self.bn_out = BatchNorm2d(out_ch, dtype=dtype)

    def forward(self, x: Tensor, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        if self.multiscale:
            cms = ops.concat_channels([self.branch1.forward(x),
                                       self.branch3.forward(x),
                                       self.branch_dil.forward(x)])
        else:
            cms = self.branch3.forward(x)
        c1 = ops.leaky_relu(ops.dropout(self.bn_concat.forward(cms, train),
                                        self.dropout_p, train, rng), self.slope)
        y = ops.leaky_relu(ops.dropout(self.bn_out.forward(self.fuse.forward(c1), train),
                                       self.dropout_p, train, rng), self.slope)
        return y

    def flops(self, h: int, w: int) -> int:
        total = self.branch3.flops(h, w)
        concat_ch = self.bn_concat.channels
        if self.multiscale:
            total += self.branch1.flops(h, w) + self.branch_dil.flops(h, w)
        total += self.bn_concat.flops(h, w) + concat_ch * h * w  # BN + activation
        total += self.fuse.flops(h, w)
        total += self.bn_out.flops(h, w) + self.out_ch * h * w
        return total


class DownsampleBlock(Module):
    """2x2 stride-2 convolution + BN + leaky ReLU; halves H and W exactly."""

    def __init__(self, in_ch, out_ch, rng, slope=0.3, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.slope = in_ch, out_ch, slope
        self.conv = Conv2d(in_ch, out_ch, 2, rng, stride=2, slope=slope, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        _, _, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"downsample needs even spatial extents, got {(h, w)}")
        return ops.leaky_relu(self.bn.forward(self.conv.forward(x), train), self.slope)

    def flops(self, h: int, w: int) -> int:
        return self.conv.flops(h, w) + self.bn.flops(h // 2, w // 2) + self.out_ch * (h // 2) * (w // 2)


class UpsampleBlock(Module):
    """3x3 stride-2 transposed convolution + BN + leaky ReLU; doubles H and W."""

    def __init__(self, in_ch, out_ch, rng, slope=0.3, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.slope = in_ch, out_ch, slope
        self.conv = ConvTranspose2d(in_ch, out_ch, 3, rng, stride=2, padding=1,
                                    output_padding=1, slope=slope, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ops.leaky_relu(self.bn.forward(self.conv.forward(x), train), self.slope)

    def flops(self, h: int, w: int) -> int:
        return self.conv.flops(h, w) + self.bn.flops(2 * h, 2 * w) + self.out_ch * 4 * h * w
