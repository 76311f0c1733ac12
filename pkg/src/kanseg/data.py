"""Dataset ingestion, photometric augmentation, and a synthetic generator.

Dataset layout on disk: ``root/images/<id>.png`` and ``root/masks/<id>.png``,
8-bit PNG, masks single-channel binary (0 background, 255 foreground).
Augmentation is photometric only (brightness/contrast, Gaussian blur, HSV
shifts), always applied, never geometric, so image/mask alignment is
untouchable by construction. The synthetic generator draws two arches of
overlapping bright ellipses on a textured dark background; its masks are the
exact ellipse unions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch
from PIL import Image

from .errors import ConfigurationError, DataError, InputError

MASK_THRESHOLD = 128


@dataclass
class SamplePair:
    """One dataset unit: RGB image, binary mask, identifier."""
    id: str
    image: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray   # (H, W) uint8, values {0, 255}


@dataclass
class AugmentSpec:
    """Photometric augmentation parameters; probability is fixed at 1.

    ``blur_kernels`` are the odd Gaussian kernel sizes sampled from; kernel
    1 is allowed as the explicit identity (no blur), real blurs are >= 3.
    """
    brightness_limit: float = 0.2
    contrast_limit: float = 0.2
    blur_kernels: tuple = (3, 5, 7)
    hue_limit: float = 10.0
    sat_limit: float = 20.0
    val_limit: float = 20.0
    probability: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.probability != 1.0:
            raise ConfigurationError(
                f"augmentation probability is fixed at 1.0, got "
                f"{self.probability}")
        for k in self.blur_kernels:
            if k != 1 and (k < 3 or k % 2 == 0):
                raise ConfigurationError(
                    f"blur kernels must be odd and >= 3 (or 1 for no blur), "
                    f"got {self.blur_kernels}")
        for name in ("brightness_limit", "contrast_limit", "hue_limit",
                     "sat_limit", "val_limit"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")


def null_augment(seed: int = 0) -> AugmentSpec:
    """A spec whose every transform is the identity (for exact-path tests
    and overfit runs)."""
    return AugmentSpec(brightness_limit=0.0, contrast_limit=0.0,
                       blur_kernels=(1,), hue_limit=0.0, sat_limit=0.0,
                       val_limit=0.0, seed=seed)


def augment(image: np.ndarray, spec: AugmentSpec,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply the photometric suite. Deterministic given (image, spec, rng).

    The random draws happen unconditionally so the rng stream advances the
    same way regardless of limits; a transform whose sampled parameters are
    the identity is skipped, which keeps the all-zero spec bit-exact.
    """
    spec.validate()
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise InputError(
            f"augment expects an 8-bit HxWx3 image, got shape "
            f"{image.shape} dtype {image.dtype}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)

    alpha = 1.0 + rng.uniform(-spec.contrast_limit, spec.contrast_limit)
    beta = rng.uniform(-spec.brightness_limit, spec.brightness_limit) * 255.0
    kernel = int(spec.blur_kernels[rng.integers(len(spec.blur_kernels))])
    h_shift = int(round(rng.uniform(-spec.hue_limit, spec.hue_limit) / 2.0))
    s_shift = int(round(rng.uniform(-spec.sat_limit, spec.sat_limit)))
    v_shift = int(round(rng.uniform(-spec.val_limit, spec.val_limit)))

    out = image
    if alpha != 1.0 or beta != 0.0:
        out = np.clip(np.rint(out.astype(np.float64) * alpha + beta),
                      0, 255).astype(np.uint8)
    if kernel > 1:
        out = cv2.GaussianBlur(out, (kernel, kernel), 0)
    if h_shift or s_shift or v_shift:
        hsv = cv2.cvtColor(out, cv2.COLOR_RGB2HSV).astype(np.int16)
        hsv[..., 0] = (hsv[..., 0] + h_shift) % 180
        hsv[..., 1] = np.clip(hsv[..., 1] + s_shift, 0, 255)
        hsv[..., 2] = np.clip(hsv[..., 2] + v_shift, 0, 255)
        out = cv2.cvtColor(hsv.astype(np.uint8), cv2.COLOR_HSV2RGB)
    return out


def binarize_mask(mask: np.ndarray) -> np.ndarray:
    return np.where(mask >= MASK_THRESHOLD, 255, 0).astype(np.uint8)


def load_dataset(root) -> list:
    """Read image/mask pairs matched by filename, sorted by id.

    Every image must have a mask and vice versa; orphans on either side are
    reported together, as are per-sample dimension mismatches.
    """
    root = Path(root)
    img_dir = root / "images"
    mask_dir = root / "masks"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise DataError(
            f"dataset root {root} must contain images/ and masks/ directories")
    image_ids = {p.stem for p in img_dir.glob("*.png")}
    mask_ids = {p.stem for p in mask_dir.glob("*.png")}
    orphan_images = sorted(image_ids - mask_ids)
    orphan_masks = sorted(mask_ids - image_ids)
    if orphan_images or orphan_masks:
        parts = []
        if orphan_images:
            parts.append(f"images without masks: {', '.join(orphan_images)}")
        if orphan_masks:
            parts.append(f"masks without images: {', '.join(orphan_masks)}")
        raise DataError("unpaired dataset files - " + "; ".join(parts))

    pairs = []
    for sample_id in sorted(image_ids):
        image = np.asarray(Image.open(img_dir / f"{sample_id}.png")
                           .convert("RGB"))
        mask = np.asarray(Image.open(mask_dir / f"{sample_id}.png")
                          .convert("L"))
        if image.shape[:2] != mask.shape[:2]:
            raise DataError(
                f"sample '{sample_id}': image is {image.shape[1]}x"
                f"{image.shape[0]} but mask is {mask.shape[1]}x{mask.shape[0]}")
        pairs.append(SamplePair(sample_id, image, binarize_mask(mask)))
    return pairs


def save_dataset(pairs, root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for pair in pairs:
        Image.fromarray(pair.image).save(root / "images" / f"{pair.id}.png")
        Image.fromarray(pair.mask).save(root / "masks" / f"{pair.id}.png")


def split_dataset(pairs, train_fraction: float, seed: int):
    """Seeded shuffle then prefix split into (train, val)."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(
            f"train fraction must be in (0, 1), got {train_fraction}")
    if len(pairs) < 2:
        raise DataError(
            f"need at least 2 samples to split, got {len(pairs)}")
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = int(round(len(pairs) * train_fraction))
    n_train = min(max(n_train, 1), len(pairs) - 1)
    train = [pairs[i] for i in order[:n_train]]
    val = [pairs[i] for i in order[n_train:]]
    return train, val


def _arch_tooth_centers(size: int, n: int, y0: float, bend: float,
                        rng: np.random.Generator):
    """Tooth centers along one dental arch (a shallow parabola)."""
    xs = np.linspace(0.18 * size, 0.82 * size, n)
    centers = []
    for x in xs:
        t = (x - 0.5 * size) / (0.3 * size)
        y = y0 * size + bend * size * t * t
        jx = rng.uniform(-0.003, 0.003) * size
        jy = rng.uniform(-0.004, 0.004) * size
        centers.append((x + jx, y + jy))
    return centers


def _draw_teeth(size: int, rng: np.random.Generator,
                axis_scale: float) -> np.ndarray:
    # Neighboring ellipses overlap heavily on purpose: each arch reads as
    # one thick smooth band, which keeps mask energy at low spatial
    # frequencies and the per-sample fraction stable.
    mask = np.zeros((size, size), dtype=np.uint8)
    for y0, bend in ((0.32, 0.08), (0.68, -0.08)):
        for cx, cy in _arch_tooth_centers(size, 6, y0, bend, rng):
            a = rng.uniform(0.120, 0.126) * size * axis_scale
            b = rng.uniform(0.139, 0.148) * size * axis_scale
            angle = rng.uniform(-3.0, 3.0)
            cv2.ellipse(mask, (int(round(cx)), int(round(cy))),
                        (max(1, int(round(a))), max(1, int(round(b)))),
                        angle, 0, 360, 255, -1)
    return mask


def synth_generate(count: int, image_size: int, seed: int) -> list:
    """Deterministic synthetic samples; mask fraction kept in (0.05, 0.6)."""
    if image_size % 32 != 0:
        raise InputError(
            f"synthetic image size must be divisible by 32, got {image_size}")
    if count < 1:
        raise InputError(f"sample count must be >= 1, got {count}")
    pairs = []
    for index in range(count):
        rng = np.random.default_rng([seed, index])

        # Per-sample variety lives in the geometry and texture draws, not
        # in the intensity levels: keeping those fixed keeps per-image
        # statistics stable, so batch-norm running averages transfer to
        # single images at eval time.
        base = 32.0
        coarse = rng.uniform(-12.0, 12.0, size=(8, 8))
        texture = cv2.resize(coarse, (image_size, image_size),
                             interpolation=cv2.INTER_LINEAR)
        noise = rng.normal(0.0, 4.0, size=(image_size, image_size))
        background = base + texture + noise

        scale = 1.0
        for _ in range(8):
            draw_rng = np.random.default_rng([seed, index, 1])
            mask = _draw_teeth(image_size, draw_rng, scale)
            fraction = float(np.count_nonzero(mask)) / mask.size
            if fraction <= 0.05:
                scale *= 1.3
            elif fraction >= 0.6:
                scale /= 1.3
            else:
                break
        else:
            raise DataError(
                f"synthetic sample {index}: could not reach a mask fraction "
                f"in (0.05, 0.6)")

        bright = 172.0
        shade = rng.normal(0.0, 6.0, size=(image_size, image_size))
        gray = np.where(mask > 0, bright + shade, background)
        gray = np.clip(gray, 0, 255).astype(np.uint8)
        gray = cv2.GaussianBlur(gray, (3, 3), 0)
        image = np.stack([gray, gray, gray], axis=-1)
        pairs.append(SamplePair(f"synth_{index:04d}", image, mask))
    return pairs


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[0] == size and image.shape[1] == size:
        return image
    return cv2.resize(image, (size, size), interpolation=cv2.INTER_LINEAR)


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    if mask.shape[0] == size and mask.shape[1] == size:
        return mask
    return cv2.resize(mask, (size, size), interpolation=cv2.INTER_NEAREST)


def normalize_image(image: np.ndarray) -> torch.Tensor:
    """uint8 HWC -> float32 CHW in [-1, 1]."""
    x = image.astype(np.float32) / 255.0
    x = (x - 0.5) / 0.5
    return torch.from_numpy(x.transpose(2, 0, 1).copy())


def make_training_batch(pairs, spec: AugmentSpec, image_size: int,
                        rng: np.random.Generator | None = None):
    """Assemble (x_aug, x_orig, target) tensors for a list of samples.

    x_orig is the resized original, x_aug its augmented twin (identical
    geometry), target the nearest-neighbor resized mask as {0, 1} floats.
    """
    xs_aug, xs_orig, targets = [], [], []
    for pair in pairs:
        image = resize_image(pair.image, image_size)
        mask = resize_mask(pair.mask, image_size)
        augmented = augment(image, spec, rng)
        xs_orig.append(normalize_image(image))
        xs_aug.append(normalize_image(augmented))
        targets.append(torch.from_numpy(
            (mask >= MASK_THRESHOLD).astype(np.float32)[None]))
    return torch.stack(xs_aug), torch.stack(xs_orig), torch.stack(targets)
