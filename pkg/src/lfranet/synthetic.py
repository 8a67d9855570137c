"""Synthetic fundus-like fixtures for smoke tests and demos.

Generates a dark circular background with bright curving "vessels" plus the
matching binary mask, so training and evaluation can be exercised without
real data.
"""

from __future__ import annotations

import numpy as np

from .data import Sample


def make_vessel_sample(size: int = 128, seed: int = 0, n_vessels: int = 6,
                       sample_id: str = "synthetic") -> Sample:
    """Procedural retina-style sample: sinusoidal bright curves on a dark disc."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    center = (size - 1) / 2.0
    disc = ((yy - center) ** 2 + (xx - center) ** 2) <= (0.48 * size) ** 2

    mask = np.zeros((size, size), dtype=bool)
    t = np.linspace(0.0, 1.0, 4 * size, dtype=np.float32)
    for _ in range(n_vessels):
        y0 = rng.uniform(0.15, 0.85) * size
        amp = rng.uniform(0.05, 0.18) * size
        freq = rng.uniform(1.0, 2.5)
        phase = rng.uniform(0.0, 2 * np.pi)
        tilt = rng.uniform(-0.3, 0.3)
        width = rng.uniform(1.5, 3.5)
        cx = t * (size - 1)
        cy = y0 + amp * np.sin(2 * np.pi * freq * t + phase) + tilt * (cx - center)
        for px, py in zip(cx, cy):
            if 0 <= py < size:
                r = int(np.ceil(width))
                ylo, yhi = max(0, int(py) - r), min(size, int(py) + r + 1)
                xlo, xhi = max(0, int(px) - r), min(size, int(px) + r + 1)
                sub_y, sub_x = np.mgrid[ylo:yhi, xlo:xhi]
                mask[ylo:yhi, xlo:xhi] |= ((sub_y - py) ** 2 + (sub_x - px) ** 2) <= width**2
    mask &= disc

    background = 0.12 + 0.05 * np.cos(2 * np.pi * yy / size) * np.cos(2 * np.pi * xx / size)
    image = np.where(disc, background, 0.02).astype(np.float32)
    image = np.where(mask, 0.85, image)
    image += rng.normal(0.0, 0.01, size=image.shape).astype(np.float32)
    image = np.clip(image, 0.0, 1.0)

    chw = np.stack([image * 0.9, image, image * 0.7]).astype(np.float32)
    return Sample(
        id=sample_id,
        image=chw,
        mask=mask[None].astype(np.float32),
        fov=disc[None].astype(np.float32),
    )


def make_dataset(count: int, size: int = 64, seed: int = 0) -> list:
    """A list of distinct synthetic samples (ids sample_00, sample_01, ...)."""
    return [
        make_vessel_sample(size=size, seed=seed + i, sample_id=f"sample_{i:02d}")
        for i in range(count)
    ]
