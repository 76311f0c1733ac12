"""End-to-end segmentation network and its configuration.

Pipeline: dual encoders -> additive fusion -> patch embedding + layer norm
-> spline block 1 -> layer norm -> first decoder stage -> spline block 2
(same embed/normalize/block pipeline on the upsampled map, residual-added)
-> remaining decoder stages -> 1x1 head. Input and output resolution are
equal for every valid config; the constructor validates the whole shape
chain up front.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F

from .decoder import DecoderStage, SegmentationHead, default_channel_schedule
from .encoders import (ConvEncoder, ResidualEncoder, fuse_features,
                       residual_encoder_output_size)
from .errors import CheckpointShapeError, ConfigurationError, InputError
from .kan import KanBlock, PatchEmbed, SplineGrid, tokens_to_map

Tensor = torch.Tensor


@dataclass
class ModelConfig:
    """Every architectural hyperparameter, with desk-scale defaults.

    The full-width preset (:func:`full_scale`) is the 320x320 network with
    512-channel encoders; the defaults here are a small configuration that
    trains and gradient-checks on a CPU.
    """

    image_size: int = 64
    in_channels: int = 3
    patch_size: int = 1
    embed_dim: int = 64
    grid_lo: float = -1.0
    grid_hi: float = 1.0
    grid_intervals: int = 5
    spline_order: int = 3
    width_multiplier: float = 0.125
    decoder_channels: tuple | None = None
    out_channels: int = 1
    seed: int = 0

    def spline_grid(self) -> SplineGrid:
        return SplineGrid(self.grid_lo, self.grid_hi, self.grid_intervals,
                          self.spline_order)

    def layout(self) -> "ModelLayout":
        """Validate the config and derive the shape plan.

        The residual encoder shrinks the image by x32 (saturating at 1x1 for
        small inputs); the decoder then doubles the token grid back up, so
        the grid-to-image ratio must be a power of two. Sizes divisible by
        32 always qualify, as do small power-of-two sizes like 16 or 32.
        """
        for name in ("image_size", "in_channels", "patch_size", "embed_dim",
                     "out_channels"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got "
                                         f"{getattr(self, name)}")
        self.spline_grid()  # validates the spline fields
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image size {self.image_size} is not divisible by patch "
                f"size {self.patch_size}")
        fused = residual_encoder_output_size(self.image_size)
        if fused % self.patch_size != 0:
            raise ConfigurationError(
                f"fused feature map size {fused} is not divisible by patch "
                f"size {self.patch_size}")
        grid = fused // self.patch_size
        ratio, rem = divmod(self.image_size, grid)
        if rem != 0 or ratio < 2 or ratio & (ratio - 1) != 0:
            raise ConfigurationError(
                f"image size {self.image_size} is incompatible with the "
                f"encoder/decoder geometry: the {grid}-wide token grid "
                f"cannot be doubled back to {self.image_size} (ratio "
                f"{self.image_size / grid:g} is not a power of two >= 2); "
                f"use a size divisible by 32, or a small power of two")
        n_stages = ratio.bit_length() - 1
        if self.decoder_channels is None:
            channels = default_channel_schedule(self.embed_dim, n_stages)
        else:
            channels = tuple(int(c) for c in self.decoder_channels)
            if len(channels) != n_stages:
                raise ConfigurationError(
                    f"decoder schedule {channels} has {len(channels)} stages "
                    f"but this geometry needs {n_stages}")
            if any(c < 1 for c in channels):
                raise ConfigurationError(
                    f"decoder channels must be >= 1, got {channels}")
        if channels[0] * self.patch_size ** 2 < 2:
            raise ConfigurationError(
                "second spline block would normalize over a single feature; "
                f"first decoder stage needs width*patch^2 >= 2, got "
                f"{channels[0]}*{self.patch_size}^2")
        return ModelLayout(fused_size=fused, token_grid=grid,
                           n_stages=n_stages, decoder_channels=channels)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(
                f"unknown model config keys: {', '.join(unknown)}")
        d = dict(d)
        if d.get("decoder_channels") is not None:
            d["decoder_channels"] = tuple(d["decoder_channels"])
        return cls(**d)


def full_scale() -> ModelConfig:
    """The full-width 320x320 configuration (heavy; needs real hardware)."""
    return ModelConfig(image_size=320, embed_dim=512, width_multiplier=1.0)


@dataclass(frozen=True)
class ModelLayout:
    fused_size: int
    token_grid: int
    n_stages: int
    decoder_channels: tuple


class KanSegNet(nn.Module):
    """Dual-encoder segmentation network with a spline-block bottleneck."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        layout = config.layout()
        self.config = config
        self.layout_info = layout
        torch.manual_seed(config.seed)

        grid = config.spline_grid()
        wm = config.width_multiplier
        self.res_encoder = ResidualEncoder(config.in_channels, wm)
        self.conv_encoder = ConvEncoder(config.in_channels, wm)

        fused_ch = self.res_encoder.out_channels
        self.patch_embed1 = PatchEmbed(fused_ch, config.embed_dim,
                                       config.patch_size)
        self.norm_tokens1 = nn.LayerNorm(config.embed_dim)
        self.block1 = KanBlock(config.embed_dim, grid)
        self.norm_block1 = nn.LayerNorm(config.embed_dim)

        channels = layout.decoder_channels
        self.decoder_stage1 = DecoderStage(config.embed_dim, channels[0])
        # block 2 tokens carry whole patches so folding back is a reshape
        block2_dim = channels[0] * config.patch_size ** 2
        self.patch_embed2 = PatchEmbed(channels[0], block2_dim,
                                       config.patch_size)
        self.norm_tokens2 = nn.LayerNorm(block2_dim)
        self.block2 = KanBlock(block2_dim, grid)

        rest = []
        prev = channels[0]
        for ch in channels[1:]:
            rest.append(DecoderStage(prev, ch))
            prev = ch
        self.decoder_rest = nn.Sequential(*rest)
        self.head = SegmentationHead(prev, config.out_channels,
                                     config.image_size)

    def forward(self, x_aug: Tensor, x_orig: Tensor) -> Tensor:
        if x_aug.shape != x_orig.shape:
            raise InputError(
                f"the two input streams must have identical shapes, got "
                f"{tuple(x_aug.shape)} and {tuple(x_orig.shape)}")
        s = self.config.image_size
        if x_aug.shape[2] != s or x_aug.shape[3] != s:
            raise ConfigurationError(
                f"model is configured for {s}x{s} inputs, got "
                f"{x_aug.shape[2]}x{x_aug.shape[3]}")

        merged = fuse_features(self.res_encoder(x_aug),
                               self.conv_encoder(x_orig))
        tokens = self.norm_tokens1(self.patch_embed1(merged))
        k1 = self.block1(tokens)
        u = self.decoder_stage1(tokens_to_map(self.norm_block1(k1)))

        t2 = self.norm_tokens2(self.patch_embed2(u))
        v = tokens_to_map(self.block2(t2))
        v = F.pixel_shuffle(v, self.config.patch_size)
        bottleneck = u + v

        return self.head(self.decoder_rest(bottleneck))

    @torch.no_grad()
    def infer(self, x: Tensor, threshold: float = 0.5) -> Tensor:
        """Eval-mode forward on identical streams; boundary-inclusive mask."""
        was_training = self.training
        self.eval()
        try:
            probs = torch.sigmoid(self.forward(x, x))
        finally:
            self.train(was_training)
        return probs >= threshold

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig) -> KanSegNet:
    return KanSegNet(config)


def state_table(model: nn.Module) -> dict:
    """All float parameters and buffers, keyed by qualified name."""
    table = {}
    for name, p in model.named_parameters():
        table[name] = p.detach()
    for name, b in model.named_buffers():
        if b.dtype.is_floating_point:
            table[name] = b.detach()
    return table


@torch.no_grad()
def restore_state(model: nn.Module, table: dict) -> None:
    """Copy a saved state table into a freshly built model.

    Keys and shapes must match the model exactly; mismatches raise with the
    offending parameter named.
    """
    own = state_table(model)
    missing = sorted(set(own) - set(table))
    if missing:
        raise CheckpointShapeError(
            f"checkpoint is missing parameters: {', '.join(missing[:5])}"
            + (" ..." if len(missing) > 5 else ""))
    extra = sorted(set(table) - set(own))
    if extra:
        raise CheckpointShapeError(
            f"checkpoint has parameters the model does not: "
            + ", ".join(extra[:5]) + (" ..." if len(extra) > 5 else ""))
    for name, dst in own.items():
        src = torch.as_tensor(table[name])
        if tuple(src.shape) != tuple(dst.shape):
            raise CheckpointShapeError(
                f"parameter '{name}' has shape {tuple(src.shape)} in the "
                f"checkpoint but {tuple(dst.shape)} in the model")
        dst.copy_(src.to(dst.dtype))
