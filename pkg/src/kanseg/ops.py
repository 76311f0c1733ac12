"""Differentiable primitives used throughout the network.

Thin functional layer over ``torch.nn.functional`` that pins the exact
conventions the rest of the package (and its tests) rely on:

* convolution is cross-correlation with bias,
* bilinear upsampling uses half-pixel source coordinates
  (``align_corners=False``), clamped at the borders,
* adaptive average pooling bins span ``[floor(i*H/out), ceil((i+1)*H/out))``,
* batch/layer normalization follow the usual biased-variance definition.

All functions validate their shape contracts and raise
:class:`~kanseg.errors.ConfigurationError` with both offending shapes named,
so misconfigured stages fail loudly instead of broadcasting silently.
Backward passes come from autograd and are verified against central finite
differences by :mod:`kanseg.gradcheck`.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, InputError

Tensor = torch.Tensor


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Spatial output size of a convolution along one axis."""
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation with bias over an NCHW tensor."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(
            f"conv2d expects 4D input and kernel, got {tuple(x.shape)} and "
            f"{tuple(weight.shape)}")
    if x.shape[1] != weight.shape[1]:
        raise ConfigurationError(
            f"conv2d channel mismatch: input {tuple(x.shape)} has "
            f"{x.shape[1]} channels, kernel {tuple(weight.shape)} expects "
            f"{weight.shape[1]}")
    out_h = conv_output_size(x.shape[2], weight.shape[2], stride, padding)
    out_w = conv_output_size(x.shape[3], weight.shape[3], stride, padding)
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(
            f"conv2d output would be {out_h}x{out_w} for input "
            f"{tuple(x.shape)} and kernel {tuple(weight.shape)} "
            f"(stride={stride}, padding={padding})")
    return F.conv2d(x, weight, bias, stride=stride, padding=padding)


def batch_norm2d(x: Tensor, scale: Tensor, shift: Tensor,
                 running_mean: Tensor, running_var: Tensor,
                 training: bool, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization with affine scale/shift.

    Training mode normalizes with the batch statistics over (N, H, W) and
    updates the running statistics in place; eval mode uses the running
    statistics. The running variance stores the same biased estimator used
    for normalization: an unbiased (Bessel-corrected) update would inflate
    eval-mode variance by n/(n-1) per layer, which compounds badly on the
    tiny bottleneck maps this network normalizes (n as small as 4).
    """
    if x.ndim != 4:
        raise ConfigurationError(f"batch_norm2d expects NCHW, got {tuple(x.shape)}")
    if x.shape[1] != scale.shape[0]:
        raise ConfigurationError(
            f"batch_norm2d channel mismatch: input {tuple(x.shape)} vs "
            f"{scale.shape[0]} normalization channels")
    if training:
        if x.shape[0] * x.shape[2] * x.shape[3] < 2:
            raise InputError(
                "batch_norm2d: training-mode statistics are degenerate with "
                f"fewer than 2 values per channel (input {tuple(x.shape)})")
        mean = x.mean(dim=(0, 2, 3))
        var = x.var(dim=(0, 2, 3), unbiased=False)
        with torch.no_grad():
            running_mean.mul_(1.0 - momentum).add_(momentum * mean)
            running_var.mul_(1.0 - momentum).add_(momentum * var)
    else:
        mean, var = running_mean, running_var
    inv = torch.rsqrt(var + eps)
    return ((x - mean[None, :, None, None]) * inv[None, :, None, None]
            * scale[None, :, None, None] + shift[None, :, None, None])


def relu(x: Tensor) -> Tensor:
    return F.relu(x)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x), the smooth base activation of the spline layers."""
    return F.silu(x)


def bilinear_upsample2x(x: Tensor) -> Tensor:
    """Double H and W by bilinear interpolation.

    Source coordinate convention: ``src = (dst + 0.5) / 2 - 0.5`` clamped to
    the valid range (half-pixel centers, no corner alignment).
    """
    if x.ndim != 4:
        raise ConfigurationError(f"bilinear_upsample2x expects NCHW, got {tuple(x.shape)}")
    h, w = x.shape[2], x.shape[3]
    return F.interpolate(x, size=(2 * h, 2 * w), mode="bilinear",
                         align_corners=False)


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Average pooling onto an arbitrary output grid.

    Output cell (i, j) averages the input bin with rows
    ``[floor(i*H/out_h), ceil((i+1)*H/out_h))`` and the analogous columns;
    the bins partition the input.
    """
    if x.ndim != 4:
        raise ConfigurationError(f"adaptive_avg_pool2d expects NCHW, got {tuple(x.shape)}")
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(
            f"adaptive_avg_pool2d needs a positive output size, got "
            f"{out_h}x{out_w}")
    return F.adaptive_avg_pool2d(x, (out_h, out_w))


def max_pool2d_3x3s2(x: Tensor) -> Tensor:
    """The 3x3 stride-2 max pooling used by the residual encoder stem."""
    return F.max_pool2d(x, kernel_size=3, stride=2, padding=1)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last dimension, then apply affine scale/shift."""
    dim = x.shape[-1]
    if dim < 2:
        raise InputError(
            f"layer_norm: normalizing over a dimension of size {dim} gives "
            "degenerate statistics")
    if scale.shape[-1] != dim:
        raise ConfigurationError(
            f"layer_norm feature mismatch: input {tuple(x.shape)} vs "
            f"{scale.shape[-1]} normalization features")
    return F.layer_norm(x, (dim,), scale, shift, eps=eps)


def sigmoid(x: Tensor) -> Tensor:
    return torch.sigmoid(x)


class BatchNorm2d(torch.nn.Module):
    """Module wrapper around :func:`batch_norm2d`.

    Unlike the stock implementation this keeps only float state (scale,
    shift, running mean/var), which lets checkpoints store every buffer in
    one flat float32 table. The momentum is fixed per instance, so no batch
    counter is needed.
    """

    def __init__(self, channels: int, momentum: float = 0.1,
                 eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.scale = torch.nn.Parameter(torch.ones(channels))
        self.shift = torch.nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm2d(x, self.scale, self.shift, self.running_mean,
                            self.running_var, self.training,
                            momentum=self.momentum, eps=self.eps)


def init_conv(conv: torch.nn.Conv2d) -> None:
    """Fan-in scaled normal init for the kernel, zeros for the bias.

    Uses the a = sqrt(5) fan-in gain conventional for conv layers rather
    than the raw relu gain: behind batch norm the forward pass is scale
    invariant, but gradient dynamics are not, and the larger kernels the
    relu gain produces slow training markedly at small learning rates.
    """
    torch.nn.init.kaiming_normal_(conv.weight, a=math.sqrt(5),
                                  mode="fan_in",
                                  nonlinearity="leaky_relu")
    if conv.bias is not None:
        torch.nn.init.zeros_(conv.bias)
