"""Learnable spline activations and the hybrid spline-conv block.

The core idea: instead of fixed scalar weights, every edge of a linear layer
carries a learnable univariate function, parameterized as a degree-k B-spline
on a shared uniform grid plus a weighted silu base path. Three such layers,
each interleaved with a 3x3 conv + batch-norm + relu over the token grid,
form one residual block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from . import ops
from .errors import ConfigurationError

Tensor = torch.Tensor


@dataclass(frozen=True)
class SplineGrid:
    """Uniform B-spline knot grid on [lo, hi].

    ``intervals`` (G) interior intervals, degree ``order`` (k); the knot
    vector is extended k knots beyond each end, giving G + 2k + 1 knots and
    G + k basis functions. On [lo, hi] the degree-k basis is non-negative
    and sums to 1.
    """

    lo: float = -1.0
    hi: float = 1.0
    intervals: int = 5
    order: int = 3

    def __post_init__(self):
        if self.intervals < 1:
            raise ConfigurationError(
                f"spline grid needs at least 1 interval, got {self.intervals}")
        if self.order < 0:
            raise ConfigurationError(
                f"spline order must be non-negative, got {self.order}")
        if not self.lo < self.hi:
            raise ConfigurationError(
                f"spline grid range is empty: [{self.lo}, {self.hi}]")

    @property
    def n_basis(self) -> int:
        return self.intervals + self.order

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.intervals

    def knots(self, dtype=torch.float32, device=None) -> Tensor:
        idx = torch.arange(-self.order, self.intervals + self.order + 1,
                           dtype=dtype, device=device)
        return self.lo + idx * self.spacing


def bspline_basis(x: Tensor, grid: SplineGrid) -> Tensor:
    """Degree-k B-spline basis values, shape ``x.shape + (G + k,)``.

    Cox-de Boor recursion from interval indicators. Inputs are clamped to
    [lo, hi] first; x == hi is assigned to the last interior interval so the
    full unit of basis mass stays on the tracked functions at the right edge.
    """
    k, G = grid.order, grid.intervals
    knots = grid.knots(dtype=x.dtype, device=x.device)
    xc = x.clamp(grid.lo, grid.hi).unsqueeze(-1)

    b = ((xc >= knots[:-1]) & (xc < knots[1:])).to(x.dtype)
    edge = torch.zeros(G + 2 * k, dtype=x.dtype, device=x.device)
    edge[k + G - 1] = 1.0
    b = torch.where(xc >= grid.hi, edge, b)

    for d in range(1, k + 1):
        left = (xc - knots[:-(d + 1)]) / (knots[d:-1] - knots[:-(d + 1)])
        right = (knots[d + 1:] - xc) / (knots[d + 1:] - knots[1:-d])
        b = left * b[..., :-1] + right * b[..., 1:]
    return b


class KanLinear(nn.Module):
    """Linear layer whose edges are learnable univariate functions.

    y[..., o] = sum_i ( base_weight[o,i] * silu(x[..., i])
                        + spline_scale[o,i] * sum_j coeffs[o,i,j] * B_j(x[..., i]) )

    Accepts any leading shape; the last dim must equal ``in_features``.
    """

    def __init__(self, in_features: int, out_features: int,
                 grid: SplineGrid | None = None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.grid = grid if grid is not None else SplineGrid()
        self.coeffs = nn.Parameter(
            torch.randn(out_features, in_features, self.grid.n_basis)
            * (0.1 / math.sqrt(in_features)))
        self.base_weight = nn.Parameter(torch.empty(out_features, in_features))
        nn.init.kaiming_uniform_(self.base_weight, a=math.sqrt(5))
        self.spline_scale = nn.Parameter(torch.ones(out_features, in_features))

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ConfigurationError(
                f"spline linear expects {self.in_features} input features, "
                f"got input shape {tuple(x.shape)}")
        basis = bspline_basis(x, self.grid)
        scaled = self.coeffs * self.spline_scale.unsqueeze(-1)
        spline = torch.einsum("...ij,oij->...o", basis, scaled)
        base = torch.einsum("...i,oi->...o", ops.silu(x), self.base_weight)
        return base + spline

    def extra_repr(self) -> str:
        return (f"in_features={self.in_features}, "
                f"out_features={self.out_features}, grid={self.grid}")


def kan_composition(x: Tensor, layers) -> Tensor:
    """Apply a chain of spline linear layers (the three-layer composition)."""
    for i, layer in enumerate(layers):
        if x.shape[-1] != layer.in_features:
            raise ConfigurationError(
                f"composition layer {i} expects {layer.in_features} features "
                f"but receives {x.shape[-1]}")
        x = layer(x)
    return x


def map_to_tokens(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, H*W, C), row-major token order."""
    return x.flatten(2).transpose(1, 2)


def tokens_to_map(tokens: Tensor) -> Tensor:
    """(B, N, D) -> (B, D, h, h); N must be a perfect square (square grids)."""
    b, n, d = tokens.shape
    h = math.isqrt(n)
    if h * h != n:
        raise ConfigurationError(
            f"{n} tokens do not form a square spatial grid")
    return tokens.transpose(1, 2).reshape(b, d, h, h)


class PatchEmbed(nn.Module):
    """PxP stride-P convolutional projection, flattened to a token sequence."""

    def __init__(self, in_channels: int, embed_dim: int, patch_size: int):
        super().__init__()
        if patch_size < 1:
            raise ConfigurationError(f"patch size must be >= 1, got {patch_size}")
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.proj = nn.Conv2d(in_channels, embed_dim, kernel_size=patch_size,
                              stride=patch_size)
        ops.init_conv(self.proj)

    def forward(self, x: Tensor) -> Tensor:
        h, w = x.shape[2], x.shape[3]
        p = self.patch_size
        if h % p != 0 or w % p != 0:
            raise ConfigurationError(
                f"feature map {h}x{w} is not divisible by patch size {p}")
        return map_to_tokens(self.proj(x))


class KanBlock(nn.Module):
    """Residual block of three spline-conv stages over a square token grid.

    Each stage applies a spline linear layer token-wise, folds the tokens to
    a spatial map, refines with conv3x3 + batch-norm + relu, and unfolds
    back. The block output is input + inner path; zeroing the conv kernels
    and biases therefore makes the block an exact identity. Any layer norm
    on the output is the caller's responsibility, which keeps that identity
    exact.
    """

    def __init__(self, embed_dim: int, grid: SplineGrid | None = None,
                 n_stages: int = 3):
        super().__init__()
        self.embed_dim = embed_dim
        self.kans = nn.ModuleList(
            KanLinear(embed_dim, embed_dim, grid) for _ in range(n_stages))
        self.convs = nn.ModuleList(
            nn.Conv2d(embed_dim, embed_dim, 3, padding=1)
            for _ in range(n_stages))
        for conv in self.convs:
            ops.init_conv(conv)
        self.norms = nn.ModuleList(
            ops.BatchNorm2d(embed_dim) for _ in range(n_stages))

    def forward(self, tokens: Tensor) -> Tensor:
        s = tokens
        for kan, conv, norm in zip(self.kans, self.convs, self.norms):
            s = kan(s)
            fmap = tokens_to_map(s)
            fmap = ops.relu(norm(conv(fmap)))
            s = map_to_tokens(fmap)
        return tokens + s
