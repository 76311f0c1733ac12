"""The named finite-difference verification suite.

Every differentiable operation is checked in double precision at tolerance
1e-4 (central differences, step 1e-4), and the assembled network is checked
end-to-end at a 16x16 micro configuration with tolerance 1e-3 (depth
accumulates roundoff). Module parameters are substituted functionally so
each check is a pure function of its leaves.
"""

from __future__ import annotations

import time
import zlib

import torch
from torch.func import functional_call

from . import kan, losses, ops
from .decoder import DecoderStage, SegmentationHead
from .encoders import ConvEncoder, ResidualEncoder
from .gradcheck import gradient_check
from .model import KanSegNet, ModelConfig

OP_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3


def _gen(seed: int) -> torch.Generator:
    return torch.Generator().manual_seed(seed)


def _randn(shape, seed: int) -> torch.Tensor:
    return torch.randn(shape, generator=_gen(seed), dtype=torch.float64)


def _uniform(shape, lo: float, hi: float, seed: int) -> torch.Tensor:
    u = torch.rand(shape, generator=_gen(seed), dtype=torch.float64)
    return lo + (hi - lo) * u


def _jitter(value: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Shift every element away from its initial value by 0.02 to 0.1.

    Zero-initialized biases are a trap for finite differences: relu zeroes
    whole patches, a window of exact zeros convolves to exactly the bias,
    and a zero bias then parks a relu kink exactly at the base point, where
    no step size gives a valid comparison. A signed offset puts the base
    point in the interior of a smooth piece.
    """
    mag = 0.02 + 0.08 * torch.rand(value.shape, generator=gen,
                                   dtype=torch.float64)
    sign = torch.where(
        torch.rand(value.shape, generator=gen, dtype=torch.float64) < 0.5,
        -1.0, 1.0)
    return value.detach().clone() + mag * sign


def _module_check(name: str, module: torch.nn.Module, inputs,
                  check_inputs: bool = True):
    """Build a (name, fn, leaves) triple over a module's parameters."""
    module = module.double()
    names = [n for n, _ in module.named_parameters()]
    gen = torch.Generator().manual_seed(zlib.crc32(name.encode()))
    params = [_jitter(p, gen) for _, p in module.named_parameters()]
    const_inputs = tuple(t.detach() for t in inputs)
    if check_inputs:
        def fn(*leaves):
            table = dict(zip(names, leaves[:len(names)]))
            return functional_call(module, table,
                                   tuple(leaves[len(names):]))
        leaves = params + list(const_inputs)
    else:
        def fn(*leaves):
            return functional_call(module, dict(zip(names, leaves)),
                                   const_inputs)
        leaves = params
    return name, fn, leaves


def _away_from_zero(x: torch.Tensor, margin: float = 0.3) -> torch.Tensor:
    return x + margin * x.sign()


def build_op_checks():
    """All per-operation checks at the strict tolerance."""
    checks = []

    def conv_fn(x, w, b):
        return ops.conv2d(x, w, b, stride=1, padding=1)
    checks.append(("conv2d", conv_fn,
                   [_randn((1, 2, 5, 5), 10), _randn((3, 2, 3, 3), 11),
                    _randn((3,), 12)]))

    def bn_fn(x, scale, shift):
        rm = torch.zeros(3, dtype=torch.float64)
        rv = torch.ones(3, dtype=torch.float64)
        return ops.batch_norm2d(x, scale, shift, rm, rv, training=True)
    checks.append(("batch_norm2d_train", bn_fn,
                   [_randn((2, 3, 4, 4), 13), 1.0 + 0.1 * _randn((3,), 14),
                    0.1 * _randn((3,), 15)]))

    def ln_fn(x, scale, shift):
        return ops.layer_norm(x, scale, shift)
    checks.append(("layer_norm", ln_fn,
                   [_randn((2, 4, 8), 16), 1.0 + 0.1 * _randn((8,), 17),
                    0.1 * _randn((8,), 18)]))

    checks.append(("relu", ops.relu, [_away_from_zero(_randn((3, 5), 19))]))
    checks.append(("silu", ops.silu, [_randn((3, 5), 20)]))
    checks.append(("bilinear_upsample2x", ops.bilinear_upsample2x,
                   [_randn((1, 2, 3, 3), 21)]))
    checks.append(("adaptive_avg_pool2d",
                   lambda x: ops.adaptive_avg_pool2d(x, 2, 2),
                   [_randn((1, 2, 5, 5), 22)]))
    checks.append(("max_pool_3x3s2", ops.max_pool2d_3x3s2,
                   [_randn((1, 2, 6, 6), 23)]))

    grid = kan.SplineGrid()
    checks.append(("bspline_basis", lambda x: kan.bspline_basis(x, grid),
                   [_uniform((16,), -0.9, 0.9, 24)]))

    torch.manual_seed(100)
    checks.append(_module_check("kan_linear", kan.KanLinear(8, 6),
                                [_uniform((4, 8), -0.9, 0.9, 25)]))
    torch.manual_seed(101)
    checks.append(_module_check("kan_block", kan.KanBlock(4).train(),
                                [_uniform((1, 4, 4), -0.9, 0.9, 26)]))

    target = (torch.rand((1, 1, 3, 3), generator=_gen(27)) < 0.5).double()
    logits = _randn((1, 1, 3, 3), 28)
    checks.append(("bce_loss", lambda l: losses.bce_loss(l, target), [logits]))
    checks.append(("dice_loss", lambda l: losses.dice_loss(l, target),
                   [logits]))
    checks.append(("combined_loss",
                   lambda l: losses.combined_loss(l, target).total, [logits]))

    torch.manual_seed(102)
    checks.append(_module_check("conv_encoder",
                                ConvEncoder(3, 1 / 64).eval(),
                                [_randn((1, 3, 16, 16), 29)],
                                check_inputs=False))
    torch.manual_seed(103)
    checks.append(_module_check("residual_encoder",
                                ResidualEncoder(3, 1 / 64).eval(),
                                [_randn((1, 3, 32, 32), 30)],
                                check_inputs=False))
    torch.manual_seed(104)
    checks.append(_module_check("decoder_stage",
                                DecoderStage(8, 4).train(),
                                [_randn((1, 8, 4, 4), 31)]))
    torch.manual_seed(105)
    checks.append(_module_check("segmentation_head",
                                SegmentationHead(4, 1, 8),
                                [_randn((1, 4, 8, 8), 32)]))
    return checks


def micro_config() -> ModelConfig:
    """The 16x16 gradient-check configuration (saturated 1x1 fused map)."""
    return ModelConfig(image_size=16, embed_dim=8, width_multiplier=1 / 64,
                       seed=3)


def build_end_to_end_check():
    model = KanSegNet(micro_config()).eval()
    x_aug = _randn((1, 3, 16, 16), 33)
    x_orig = _randn((1, 3, 16, 16), 34)
    return _module_check("end_to_end_16x16", model, [x_aug, x_orig],
                         check_inputs=False)


def run_suite(tolerance: float = OP_TOLERANCE,
              end_to_end_tolerance: float = END_TO_END_TOLERANCE,
              include_end_to_end: bool = True,
              progress=None) -> list:
    """Run all checks; returns the list of GradCheckResult."""
    results = []

    def run_one(name, fn, leaves, tol):
        start = time.monotonic()
        result = gradient_check(fn, leaves, name=name, tolerance=tol)
        elapsed = time.monotonic() - start
        if progress is not None:
            progress(f"{result}  [{elapsed:.1f}s]")
        results.append(result)

    for name, fn, leaves in build_op_checks():
        run_one(name, fn, leaves, tolerance)
    if include_end_to_end:
        name, fn, leaves = build_end_to_end_check()
        run_one(name, fn, leaves, end_to_end_tolerance)
    return results


def all_passed(results) -> bool:
    return all(r.passed for r in results)
