"""Fundus dataset ingestion: loading, resizing, augmentation and splitting.

Expected directory layout::

    root/images/<stem>.png      8-bit gray or RGB
    root/masks/<stem>.png       vessel annotation, binarized at half of max
    root/fov/<stem>.png         optional field-of-view mask

Images and masks pair by shared stem.  All arrays are channel-first float32
in [0, 1]; masks and FOVs are single-channel {0, 1}.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from .errors import DatasetError, MissingPairError, TooFewSamplesError

log = logging.getLogger(__name__)

ROTATION_DEGREES = 20.0
CONTRAST_RANGE = (0.8, 1.2)


@dataclass
class Sample:
    """One dataset record: image, vessel mask, optional FOV mask, provenance id."""

    id: str
    image: np.ndarray  # [3, H, W] float32 in [0, 1]
    mask: np.ndarray  # [1, H, W] float32 in {0, 1}
    fov: Optional[np.ndarray] = None  # [1, H, W] float32 in {0, 1}


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    train_count: int
    test_count: int
    native_resolution: Tuple[int, int]
    target_size: int = 512
    augmented_count: int = 0


DATASET_SPECS = {
    "drive": DatasetSpec("drive", 20, 20, (565, 584), 512, 1080),
    "stare": DatasetSpec("stare", 16, 4, (700, 605), 512, 1024),
    "chase": DatasetSpec("chase", 20, 8, (1024, 1024), 512, 1080),
}


def _read_image(path: Path) -> np.ndarray:
    """Read a PNG as [3, H, W] float32 in [0, 1] (gray replicated to 3 channels)."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DatasetError(f"unreadable image file: {path}")
    if raw.ndim == 2:
        raw = np.stack([raw] * 3, axis=-1)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    img = rgb.astype(np.float32)
    if raw.dtype == np.uint8:
        img /= 255.0
    elif raw.dtype == np.uint16:
        img /= 65535.0
    return np.clip(img, 0.0, 1.0).transpose(2, 0, 1)


def _read_mask(path: Path) -> np.ndarray:
    """Read a mask PNG as [1, H, W] with values in {0, 1} (threshold: half of max)."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise DatasetError(f"unreadable mask file: {path}")
    arr = raw.astype(np.float32)
    peak = float(arr.max())
    binary = (arr >= 0.5 * peak).astype(np.float32) if peak > 0 else np.zeros_like(arr)
    return binary[None]


def _stems(folder: Path) -> dict:
    out = {}
    for p in sorted(folder.iterdir()):
        if p.suffix.lower() == ".png" and p.is_file():
            out[p.stem] = p
    return out


def load_dataset(root, spec: Optional[DatasetSpec] = None) -> List[Sample]:
    """Load all image/mask pairs under ``root``, sorted by id."""
    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    fov_dir = root / "fov"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise DatasetError(f"dataset root {root} must contain images/ and masks/ directories")
    images = _stems(images_dir)
    masks = _stems(masks_dir)
    fovs = _stems(fov_dir) if fov_dir.is_dir() else {}
    if not images:
        log.warning("dataset root %s contains no PNG images", root)
        return []
    for stem in sorted(set(images) | set(masks)):
        if stem not in masks:
            raise MissingPairError(f"image {stem!r} has no matching mask under {masks_dir}")
        if stem not in images:
            raise MissingPairError(f"mask {stem!r} has no matching image under {images_dir}")
    samples = []
    for stem in sorted(images):
        image = _read_image(images[stem])
        mask = _read_mask(masks[stem])
        fov = _read_mask(fovs[stem]) if stem in fovs else None
        for name, arr in (("mask", mask), ("fov", fov)):
            if arr is not None and arr.shape[1:] != image.shape[1:]:
                raise DatasetError(
                    f"{name} extents {arr.shape[1:]} differ from image {image.shape[1:]} for {stem!r}"
                )
        samples.append(Sample(id=stem, image=image, mask=mask, fov=fov))
    return samples


def _resize_chw(arr: np.ndarray, size: int, interpolation) -> np.ndarray:
    hwc = arr.transpose(1, 2, 0)
    resized = cv2.resize(hwc, (size, size), interpolation=interpolation)
    if resized.ndim == 2:
        resized = resized[:, :, None]
    return np.ascontiguousarray(resized.transpose(2, 0, 1))


def preprocess(s: Sample, target: int = 512) -> Sample:
    """Resize to target x target: bilinear for the image, nearest for masks."""
    image = np.clip(_resize_chw(s.image, target, cv2.INTER_LINEAR), 0.0, 1.0)
    mask = _resize_chw(s.mask, target, cv2.INTER_NEAREST)
    fov = _resize_chw(s.fov, target, cv2.INTER_NEAREST) if s.fov is not None else None
    return Sample(id=s.id, image=image, mask=mask, fov=fov)


def _rotate_chw(arr: np.ndarray, degrees: float, interpolation) -> np.ndarray:
    c, h, w = arr.shape
    matrix = cv2.getRotationMatrix2D((w / 2.0 - 0.5, h / 2.0 - 0.5), degrees, 1.0)
    hwc = arr.transpose(1, 2, 0)
    rotated = cv2.warpAffine(hwc, matrix, (w, h), flags=interpolation,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=0)
    if rotated.ndim == 2:
        rotated = rotated[:, :, None]
    return np.ascontiguousarray(rotated.transpose(2, 0, 1))


def rotate_sample(s: Sample, degrees: float, new_id: str) -> Sample:
    image = np.clip(_rotate_chw(s.image, degrees, cv2.INTER_LINEAR), 0.0, 1.0)
    mask = _rotate_chw(s.mask, degrees, cv2.INTER_NEAREST)
    fov = _rotate_chw(s.fov, degrees, cv2.INTER_NEAREST) if s.fov is not None else None
    return Sample(id=new_id, image=image, mask=mask, fov=fov)


def adjust_contrast(s: Sample, scale: float, new_id: str) -> Sample:
    """Scale image contrast about mid-gray; annotation masks are untouched."""
    image = np.clip((s.image - 0.5) * np.float32(scale) + 0.5, 0.0, 1.0)
    fov = None if s.fov is None else s.fov.copy()
    return Sample(id=new_id, image=image.astype(np.float32), mask=s.mask.copy(), fov=fov)


_AUGMENT_KINDS = ("rotate", "contrast", "both")


def augment(samples: Sequence[Sample], target_count: int, seed: int) -> List[Sample]:
    """Deterministically expand ``samples`` to exactly ``target_count`` entries.

    Originals are kept.  Extra samples cycle over the inputs (in order) and
    over {rotate +/-20 deg, contrast scale in [0.8, 1.2], both}; the rotation
    sign and contrast scale are drawn from the seeded stream.
    """
    n = len(samples)
    if target_count < n:
        raise ValueError(f"target_count {target_count} below input count {n}")
    out = list(samples)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    for k in range(target_count - n):
        src = samples[k % n]
        kind = _AUGMENT_KINDS[(k // n) % len(_AUGMENT_KINDS)]
        degrees = ROTATION_DEGREES * (1.0 if rng.random() < 0.5 else -1.0)
        scale = float(rng.uniform(*CONTRAST_RANGE))
        new_id = f"{src.id}__aug{k:04d}_{kind}"
        if kind == "rotate":
            aug = rotate_sample(src, degrees, new_id)
        elif kind == "contrast":
            aug = adjust_contrast(src, scale, new_id)
        else:
            aug = adjust_contrast(rotate_sample(src, degrees, new_id), scale, new_id)
        out.append(aug)
    return out


def split_train_val(samples: Sequence[Sample], fraction: float = 0.8,
                    seed: int = 0) -> Tuple[List[Sample], List[Sample]]:
    """Seeded shuffle, then an exact disjoint split (both parts non-empty)."""
    n = len(samples)
    if n < 2:
        raise TooFewSamplesError(f"need at least 2 samples to split, got {n}")
    order = np.random.default_rng(np.random.SeedSequence([seed, 3])).permutation(n)
    k = int(round(n * fraction))
    k = min(max(k, 1), n - 1)
    train = [samples[i] for i in order[:k]]
    val = [samples[i] for i in order[k:]]
    return train, val
