"""Progressive upsampling decoder and the 1x1 segmentation head."""

from __future__ import annotations

import torch
import torch.nn as nn

from . import ops
from .errors import ConfigurationError
from .encoders import ConvBnRelu

Tensor = torch.Tensor


class DecoderStage(nn.Module):
    """Bilinear x2 upsample followed by two conv+BN+relu refinements."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.refine1 = ConvBnRelu(in_ch, out_ch)
        self.refine2 = ConvBnRelu(out_ch, out_ch)
        self.in_channels = in_ch
        self.out_channels = out_ch

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"decoder stage expects {self.in_channels} channels, got "
                f"{tuple(x.shape)}")
        x = ops.bilinear_upsample2x(x)
        return self.refine2(self.refine1(x))


class SegmentationHead(nn.Module):
    """1x1 conv producing per-pixel logits at the configured resolution."""

    def __init__(self, in_ch: int, out_ch: int, image_size: int):
        super().__init__()
        if out_ch < 1:
            raise ConfigurationError(
                f"head needs at least 1 output channel, got {out_ch}")
        self.image_size = image_size
        self.proj = nn.Conv2d(in_ch, out_ch, 1)
        ops.init_conv(self.proj)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise ConfigurationError(
                f"head expects the decoded map at {self.image_size}x"
                f"{self.image_size}, got {x.shape[2]}x{x.shape[3]}")
        return self.proj(x)


def default_channel_schedule(embed_dim: int, n_stages: int) -> tuple[int, ...]:
    """Halving schedule from the bottleneck width, floored at 16 channels.

    The floor only binds at narrow desk widths; without it the late stages
    get so few channels that fine-scale features barely move at small
    learning rates.
    """
    return tuple(max(embed_dim >> (i + 1), 16) for i in range(n_stages))
