"""Training objective: binary cross-entropy plus soft Dice.

total = 0.5 * BCE + Dice_loss, with BCE averaged over every pixel in the
batch and the Dice ratio computed over the same global pixel pool with
smoothing epsilon 1e-5. BCE is evaluated in the log-sum-exp form so large
logits never produce inf/nan.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InputError

Tensor = torch.Tensor

SMOOTH_EPS = 1e-5


def _check_pair(pred: Tensor, target: Tensor, require_binary: bool) -> None:
    if pred.shape != target.shape:
        raise InputError(
            f"prediction shape {tuple(pred.shape)} does not match target "
            f"shape {tuple(target.shape)}")
    if require_binary and not torch.all((target == 0) | (target == 1)):
        raise InputError("target mask must contain only 0 and 1")


def bce_loss(logits: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross-entropy on raw logits.

    Uses -[y*log s(x) + (1-y)*log(1-s(x))] = max(x,0) - x*y + log(1+e^-|x|).
    """
    _check_pair(logits, target, require_binary=True)
    loss = (logits.clamp(min=0) - logits * target
            + torch.log1p(torch.exp(-logits.abs())))
    return loss.mean()


def dice_loss_on_probs(probs: Tensor, target: Tensor,
                       eps: float = SMOOTH_EPS) -> Tensor:
    """1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps) over all pixels."""
    _check_pair(probs, target, require_binary=False)
    inter = (probs * target).sum()
    denom = probs.sum() + target.sum()
    return 1.0 - (2.0 * inter + eps) / (denom + eps)


def dice_loss(logits: Tensor, target: Tensor, eps: float = SMOOTH_EPS) -> Tensor:
    return dice_loss_on_probs(torch.sigmoid(logits), target, eps=eps)


@dataclass
class LossValue:
    """Combined loss with both parts kept for logging; total is the
    differentiable training objective."""
    total: Tensor
    bce_part: Tensor
    dice_part: Tensor


def combined_loss(logits: Tensor, target: Tensor) -> LossValue:
    bce = bce_loss(logits, target)
    dice = dice_loss(logits, target)
    return LossValue(total=0.5 * bce + dice, bce_part=bce, dice_part=dice)
