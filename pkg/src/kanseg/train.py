"""SGD training with momentum, cosine-annealed lr, and early stopping.

One epoch = seeded shuffle of the training split, batched forward on
(augmented, original) input pairs, combined BCE+Dice loss, SGD update.
Validation runs per-sample with identical inputs on both streams, which is
the deployment contract. The best-validation-loss snapshot becomes the
returned checkpoint.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from statistics import fmean

import numpy as np
import torch

from .checkpoint import CheckpointState
from .data import (AugmentSpec, load_dataset, make_training_batch,
                   normalize_image, resize_image, resize_mask, split_dataset)
from .errors import (CheckpointShapeError, ConfigurationError, DataError,
                     InputError, NumericalError)
from .losses import combined_loss
from .metrics import ConfusionCounts, compute_metrics, confusion_counts
from .model import KanSegNet, ModelConfig, state_table

Tensor = torch.Tensor


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 1e-4
    min_lr: float = 1e-5
    epochs: int = 200
    early_stop_patience: int = 20
    train_fraction: float = 0.8
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    data_root: str | None = None
    out_dir: str | None = None

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got "
                                     f"{self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.early_stop_patience < 1:
            raise ConfigurationError(
                f"early_stop_patience must be >= 1, got "
                f"{self.early_stop_patience}")
        # lr = min_lr = 0 is allowed so frozen runs stay expressible
        if not (self.lr >= self.min_lr >= 0):
            raise ConfigurationError(
                f"need lr >= min_lr >= 0, got lr={self.lr} "
                f"min_lr={self.min_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(
                f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(
                f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}")
        self.augment.validate()


def cosine_lr(epoch: int, config: TrainConfig) -> float:
    """lr(e) = min_lr + (lr0 - min_lr) * (1 + cos(pi * e / (E-1))) / 2."""
    if not 0 <= epoch < config.epochs:
        raise InputError(
            f"epoch {epoch} outside schedule range 0..{config.epochs - 1}")
    if config.epochs == 1:
        return config.lr
    span = config.lr - config.min_lr
    return config.min_lr + 0.5 * span * (
        1.0 + math.cos(math.pi * epoch / (config.epochs - 1)))


@torch.no_grad()
def sgd_step(params: dict, grads: dict, buffers: dict, lr: float,
             momentum: float, weight_decay: float) -> None:
    """v <- mu*v + (g + wd*theta); theta <- theta - lr*v, all in place."""
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not torch.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter '{name}'")
        v = buffers[name]
        v.mul_(momentum).add_(g + weight_decay * p)
        p.add_(v, alpha=-lr)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_dice: float


LOG_HEADER = "epoch,lr,train_loss,val_loss,val_dice"


def log_to_csv(log) -> str:
    lines = [LOG_HEADER]
    for row in log:
        lines.append(f"{row.epoch},{row.lr!r},{row.train_loss!r},"
                     f"{row.val_loss!r},{row.val_dice!r}")
    return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    checkpoint: CheckpointState
    log: list
    model: KanSegNet
    best_epoch: int


def _validate_epoch(model: KanSegNet, pairs, image_size: int):
    """Per-sample validation with identical streams; returns (loss, dice)."""
    model.eval()
    losses = []
    counts = ConfusionCounts(2)
    with torch.no_grad():
        for pair in pairs:
            image = resize_image(pair.image, image_size)
            mask = resize_mask(pair.mask, image_size)
            x = normalize_image(image).unsqueeze(0)
            target = torch.from_numpy(
                (mask >= 128).astype(np.float32)[None, None])
            logits = model(x, x)
            losses.append(float(combined_loss(logits, target).total))
            pred = (torch.sigmoid(logits) >= 0.5)[0, 0].numpy().astype(np.int64)
            counts.add(confusion_counts(pred, (mask >= 128).astype(np.int64)))
    return fmean(losses), compute_metrics(counts)["dice"]


def _snapshot(model: KanSegNet, buffers: dict, epoch: int, val_loss: float,
              rng_streams: dict) -> CheckpointState:
    params = {name: t.detach().cpu().clone().numpy().astype(np.float32)
              for name, t in state_table(model).items()}
    momentum = {name: v.detach().cpu().clone().numpy().astype(np.float32)
                for name, v in buffers.items()}
    numpy_rng = json.dumps(
        {name: rng.bit_generator.state for name, rng in rng_streams.items()},
        sort_keys=True).encode("utf-8")
    return CheckpointState(
        config=model.config, params=params, momentum=momentum, epoch=epoch,
        best_val_loss=val_loss,
        torch_rng=bytes(torch.get_rng_state().numpy().tobytes()),
        numpy_rng=numpy_rng)


def train(config: TrainConfig, pairs=None,
          import_weights: dict | None = None) -> TrainResult:
    """Run the full loop and return the best checkpoint plus the metric log.

    ``pairs`` bypasses disk loading (the CLI passes a dataset root instead);
    ``import_weights`` is an externally trained parameter table for the
    residual encoder.
    """
    config.validate()
    if pairs is None:
        if config.data_root is None:
            raise ConfigurationError("no dataset: set data_root or pass pairs")
        pairs = load_dataset(config.data_root)
    if len(pairs) < 2:
        raise DataError(f"training needs at least 2 samples, got {len(pairs)}")
    train_pairs, val_pairs = split_dataset(pairs, config.train_fraction,
                                           config.seed)

    model = KanSegNet(config.model)
    if import_weights is not None:
        _import_encoder_weights(model, import_weights)
    params = dict(model.named_parameters())
    buffers = {name: torch.zeros_like(p) for name, p in params.items()}
    rng_streams = {
        "shuffle": np.random.default_rng([config.seed, 1]),
        "augment": np.random.default_rng([config.seed, 2]),
    }

    log = []
    best_loss = math.inf
    best_epoch = -1
    best_state = None
    stale = 0
    for epoch in range(config.epochs):
        lr = cosine_lr(epoch, config)
        model.train()
        order = rng_streams["shuffle"].permutation(len(train_pairs))
        batch_losses = []
        for start in range(0, len(train_pairs), config.batch_size):
            batch = [train_pairs[i] for i in order[start:start + config.batch_size]]
            x_aug, x_orig, target = make_training_batch(
                batch, config.augment, config.model.image_size,
                rng_streams["augment"])
            model.zero_grad(set_to_none=True)
            loss = combined_loss(model(x_aug, x_orig), target)
            if not torch.isfinite(loss.total):
                raise NumericalError(
                    f"non-finite training loss at epoch {epoch}, batch "
                    f"{start // config.batch_size}")
            loss.total.backward()
            grads = {name: p.grad for name, p in params.items()}
            sgd_step(params, grads, buffers, lr, config.momentum,
                     config.weight_decay)
            batch_losses.append(loss.total.item())

        val_loss, val_dice = _validate_epoch(model, val_pairs,
                                             config.model.image_size)
        log.append(EpochLog(epoch, lr, fmean(batch_losses), val_loss,
                            val_dice))
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_state = _snapshot(model, buffers, epoch, val_loss,
                                   rng_streams)
            stale = 0
        else:
            stale += 1
        if stale >= config.early_stop_patience:
            break

    return TrainResult(checkpoint=best_state, log=log, model=model,
                       best_epoch=best_epoch)


def _import_encoder_weights(model: KanSegNet, table: dict) -> None:
    """Copy an external parameter table into the residual encoder.

    Table keys are relative to the encoder (e.g. "stem.conv.weight").
    """
    own = {name: t for name, t in state_table(model.res_encoder).items()}
    unknown = sorted(set(table) - set(own))
    if unknown:
        raise CheckpointShapeError(
            "weight table has entries the residual encoder does not: "
            + ", ".join(unknown[:5]) + (" ..." if len(unknown) > 5 else ""))
    with torch.no_grad():
        for name, arr in table.items():
            dst = own[name]
            src = torch.as_tensor(np.asarray(arr))
            if tuple(src.shape) != tuple(dst.shape):
                raise CheckpointShapeError(
                    f"imported parameter '{name}' has shape "
                    f"{tuple(src.shape)} but the encoder needs "
                    f"{tuple(dst.shape)}")
            dst.copy_(src.to(dst.dtype))
