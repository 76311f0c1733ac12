"""The two feature-extraction streams and their fusion.

One stream is a residual encoder (resnet-18 layout: 7x7 stride-2 stem,
max-pool, four stages of two basic blocks) that downsamples x32 and consumes
the augmented image. The other is a plain 4-layer conv encoder that keeps
full spatial resolution and consumes the original image. Fusion adds the
residual features to the conv features pooled onto the same grid.

Channel widths follow the (64, 128, 256, 512) progression scaled by a width
multiplier so small configurations stay cheap; the multiplier 1.0 preset is
the full-width network.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from . import ops
from .errors import ConfigurationError

Tensor = torch.Tensor

BASE_WIDTHS = (64, 128, 256, 512)


def scaled_widths(width_multiplier: float) -> tuple[int, int, int, int]:
    if width_multiplier <= 0:
        raise ConfigurationError(
            f"width multiplier must be positive, got {width_multiplier}")
    return tuple(max(1, round(c * width_multiplier)) for c in BASE_WIDTHS)


def residual_encoder_output_size(size: int) -> int:
    """Spatial size of the residual encoder's final stage for a given input.

    Mirrors the stem conv, max-pool, and three stride-2 stages; the floor
    arithmetic keeps every intermediate size >= 1, so inputs smaller than 32
    are legal and simply saturate at 1x1.
    """
    size = ops.conv_output_size(size, 7, 2, 3)
    size = ops.conv_output_size(size, 3, 2, 1)
    for _ in range(3):
        size = ops.conv_output_size(size, 3, 2, 1)
    return size


class ConvBnRelu(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3,
                 stride: int = 1, padding: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride=stride,
                              padding=padding)
        ops.init_conv(self.conv)
        self.norm = ops.BatchNorm2d(out_ch)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


class ConvEncoder(nn.Module):
    """Four conv+BN+relu stages at full resolution (stride 1 throughout)."""

    def __init__(self, in_channels: int = 3, width_multiplier: float = 1.0):
        super().__init__()
        widths = scaled_widths(width_multiplier)
        self.out_channels = widths[-1]
        stages = []
        prev = in_channels
        for w in widths:
            stages.append(ConvBnRelu(prev, w))
            prev = w
        self.stages = nn.Sequential(*stages)

    def forward(self, x: Tensor) -> Tensor:
        return self.stages(x)


class BasicBlock(nn.Module):
    """Two 3x3 convs with identity (or 1x1 projection) shortcut."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.norm1 = ops.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.norm2 = ops.BatchNorm2d(out_ch)
        ops.init_conv(self.conv1)
        ops.init_conv(self.conv2)
        if stride != 1 or in_ch != out_ch:
            proj = nn.Conv2d(in_ch, out_ch, 1, stride=stride)
            ops.init_conv(proj)
            self.shortcut = nn.Sequential(proj, ops.BatchNorm2d(out_ch))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        out = ops.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return ops.relu(out + self.shortcut(x))


class ResidualEncoder(nn.Module):
    """Resnet-18 style feature extractor: stem + 4 stages of 2 basic blocks.

    Total downsampling x32 (stem conv x2, max-pool x2, stages 2-4 each x2);
    random init. Externally trained stem/stage weights can be imported
    through the training CLI's weight-table hook.
    """

    def __init__(self, in_channels: int = 3, width_multiplier: float = 1.0):
        super().__init__()
        widths = scaled_widths(width_multiplier)
        self.out_channels = widths[-1]
        self.stem = ConvBnRelu(in_channels, widths[0], kernel=7, stride=2,
                               padding=3)
        stages = []
        prev = widths[0]
        for i, w in enumerate(widths):
            stride = 1 if i == 0 else 2
            stages.append(BasicBlock(prev, w, stride=stride))
            stages.append(BasicBlock(w, w))
            prev = w
        self.stages = nn.Sequential(*stages)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.stem.conv.in_channels:
            raise ConfigurationError(
                f"residual encoder expects {self.stem.conv.in_channels} "
                f"input channels, got {tuple(x.shape)}")
        x = self.stem(x)
        x = ops.max_pool2d_3x3s2(x)
        return self.stages(x)


def fuse_features(f_res: Tensor, f_cnn: Tensor) -> Tensor:
    """Merge the two streams: f_res + pool(f_cnn onto f_res's grid)."""
    if f_res.shape[1] != f_cnn.shape[1]:
        raise ConfigurationError(
            f"cannot fuse feature maps with different channel counts: "
            f"{tuple(f_res.shape)} vs {tuple(f_cnn.shape)}")
    pooled = ops.adaptive_avg_pool2d(f_cnn, f_res.shape[2], f_res.shape[3])
    return f_res + pooled
