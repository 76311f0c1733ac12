"""Checkpoint-driven evaluation and single-image prediction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch
from PIL import Image

from .checkpoint import CheckpointState
from .data import (MASK_THRESHOLD, load_dataset, normalize_image,
                   resize_image)
from .errors import DataError
from .metrics import (ConfusionCounts, METRIC_NAMES, compute_metrics,
                      confusion_counts, format_metric_block)
from .model import KanSegNet, restore_state

OVERLAY_ALPHA = 0.4
OVERLAY_COLOR = (255, 64, 64)


def model_from_checkpoint(state: CheckpointState) -> KanSegNet:
    model = KanSegNet(state.config)
    restore_state(model, state.params)
    model.eval()
    return model


@dataclass
class EvalReport:
    metrics: dict                 # global, from pooled confusion counts
    rows: list                    # (sample id, per-sample metric dict)

    def to_text(self) -> str:
        return format_metric_block(self.metrics)

    def to_csv(self) -> str:
        lines = ["id," + ",".join(METRIC_NAMES)]
        for sample_id, m in self.rows:
            lines.append(sample_id + ","
                         + ",".join(f"{m[k]:.6f}" for k in METRIC_NAMES))
        return "\n".join(lines) + "\n"


def evaluate(state: CheckpointState, data_root=None, pairs=None) -> EvalReport:
    """Segment every sample and score it against its mask.

    The dataset must already be at the model's configured resolution; a
    mismatch is an error rather than a silent resize.
    """
    model = model_from_checkpoint(state)
    if pairs is None:
        pairs = load_dataset(data_root)
    if not pairs:
        raise DataError("dataset is empty; nothing to evaluate")
    size = state.config.image_size
    rows = []
    pooled = ConfusionCounts(2)
    with torch.no_grad():
        for pair in pairs:
            h, w = pair.image.shape[:2]
            if (h, w) != (size, size):
                raise DataError(
                    f"sample '{pair.id}' is {w}x{h} but the checkpoint's "
                    f"model expects {size}x{size}")
            x = normalize_image(pair.image).unsqueeze(0)
            pred = model.infer(x)[0, 0].numpy().astype(np.int64)
            target = (pair.mask >= MASK_THRESHOLD).astype(np.int64)
            counts = confusion_counts(pred, target)
            rows.append((pair.id, compute_metrics(counts)))
            pooled.add(counts)
    return EvalReport(metrics=compute_metrics(pooled), rows=rows)


def predict(state: CheckpointState, image_path, out_dir) -> tuple:
    """Write <stem>_mask.png (0/255) and <stem>_overlay.png for one image.

    The image is resized to the model resolution for inference; the mask is
    resized back (nearest neighbor, stays binary) to the input geometry.
    """
    image_path = Path(image_path)
    try:
        image = np.asarray(Image.open(image_path).convert("RGB"))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {image_path}: {exc}") from exc

    model = model_from_checkpoint(state)
    size = state.config.image_size
    x = normalize_image(resize_image(image, size)).unsqueeze(0)
    small = model.infer(x)[0, 0].numpy().astype(np.uint8) * 255

    h, w = image.shape[:2]
    mask = small if (h, w) == (size, size) else cv2.resize(
        small, (w, h), interpolation=cv2.INTER_NEAREST)

    blended = image.astype(np.float64)
    sel = mask > 0
    color = np.array(OVERLAY_COLOR, dtype=np.float64)
    blended[sel] = (1.0 - OVERLAY_ALPHA) * blended[sel] + OVERLAY_ALPHA * color
    overlay = np.clip(np.rint(blended), 0, 255).astype(np.uint8)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask_path = out_dir / f"{image_path.stem}_mask.png"
    overlay_path = out_dir / f"{image_path.stem}_overlay.png"
    Image.fromarray(mask).save(mask_path)
    Image.fromarray(overlay).save(overlay_path)
    return mask_path, overlay_path
