"""Finite-difference verification of analytic gradients.

Central differences are compared against autograd, one scalar parameter at a
time. Vector-valued functions are reduced to a scalar through a fixed random
projection so a single backward pass covers every output.

Networks with relu, max-pool, or clamped splines are only piecewise smooth:
a fixed step is invalid whenever [x-h, x+h] straddles a derivative kink of
some hidden activation. The checker detects straddling through the discrete
second difference (which jumps at a kink but stays O(h*f'') on a smooth
piece) and shrinks the step until the interval lies on a single smooth
piece, so every scalar is verified at full strength.

This is deliberately independent of autograd internals: it only ever calls
the function under test forward, so it catches wrong custom backward rules,
wrong in-place semantics, and silently detached tensors alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import torch

from .errors import NumericalError

Tensor = torch.Tensor

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    """Outcome of one gradient check."""
    name: str
    max_rel_error: float
    tolerance: float
    n_scalars: int
    worst_input: int = 0
    worst_index: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: max rel err {self.max_rel_error:.3e} "
                f"(tol {self.tolerance:.1e}, {self.n_scalars} scalars)")


def _projection(shapes: Sequence[tuple], seed: int) -> list[Tensor]:
    gen = torch.Generator().manual_seed(seed)
    return [torch.randn(s, generator=gen, dtype=torch.float64) for s in shapes]


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(1, |a|, |n|); absolute near zero, relative when large."""
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def gradient_check(fn: Callable[..., Tensor | tuple],
                   inputs: Sequence[Tensor],
                   name: str = "fn",
                   step: float = DEFAULT_STEP,
                   tolerance: float = DEFAULT_TOLERANCE,
                   projection_seed: int = 0) -> GradCheckResult:
    """Compare autograd gradients of ``fn`` against central differences.

    ``fn`` maps the leaf tensors in ``inputs`` to a tensor (or tuple of
    tensors); it must be a pure function of them. Every input must be a
    float64 leaf. The outputs are contracted with fixed random vectors to a
    scalar; the scalar's gradient w.r.t. every element of every input is then
    verified one coordinate at a time.
    """
    inputs = [t.detach().clone().requires_grad_(True) for t in inputs]

    def as_tuple(out) -> tuple:
        return out if isinstance(out, tuple) else (out,)

    with torch.no_grad():
        probe = as_tuple(fn(*[t.detach() for t in inputs]))
    weights = _projection([tuple(t.shape) for t in probe], projection_seed)

    def scalar(*args: Tensor) -> Tensor:
        outs = as_tuple(fn(*args))
        total = sum((o * w).sum() for o, w in zip(outs, weights))
        if not torch.isfinite(total):
            raise NumericalError(f"{name}: non-finite loss in gradient check")
        return total

    loss = scalar(*inputs)
    grads = torch.autograd.grad(loss, inputs, allow_unused=True)
    base = loss.item()

    # A kink that slips past the straddle test contributes at most half the
    # gap threshold to the central difference, so tolerance/4 keeps any
    # undetected kink error strictly below the pass bound.
    gap_tol = tolerance / 4.0
    steps = (step, step / 8.0, step / 64.0, step / 512.0)

    max_err = 0.0
    worst = (0, 0)
    failures = []
    n_scalars = 0
    with torch.no_grad():
        for i, (inp, grad) in enumerate(zip(inputs, grads)):
            flat = inp.reshape(-1)
            gflat = (torch.zeros_like(flat) if grad is None
                     else grad.reshape(-1))
            for j in range(flat.numel()):
                n_scalars += 1
                orig = flat[j].item()
                analytic = gflat[j].item()
                fd = 0.0
                for h in steps:
                    flat[j] = orig + h
                    up = scalar(*inputs).item()
                    flat[j] = orig - h
                    down = scalar(*inputs).item()
                    fd = (up - down) / (2.0 * h)
                    gap = abs(up + down - 2.0 * base) / h
                    if gap <= gap_tol * max(1.0, abs(fd), abs(analytic)):
                        break
                flat[j] = orig
                err = relative_error(analytic, fd)
                if err > max_err:
                    max_err = err
                    worst = (i, j)
                if err >= tolerance:
                    failures.append((i, j, analytic, fd, err))
    return GradCheckResult(name=name, max_rel_error=max_err,
                           tolerance=tolerance, n_scalars=n_scalars,
                           worst_input=worst[0], worst_index=worst[1],
                           failures=failures)


def run_checks(checks: Sequence[tuple[str, Callable, Sequence[Tensor]]],
               step: float = DEFAULT_STEP,
               tolerance: float = DEFAULT_TOLERANCE) -> list[GradCheckResult]:
    """Run a list of named gradient checks and return all results."""
    return [gradient_check(fn, inputs, name=name, step=step,
                           tolerance=tolerance)
            for name, fn, inputs in checks]
