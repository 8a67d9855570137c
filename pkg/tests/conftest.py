import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_png_dataset(root, samples):
    """Write Sample objects as a PNG dataset directory tree."""
    import cv2

    for sub in ("images", "masks", "fov"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for s in samples:
        img = (np.clip(s.image, 0, 1).transpose(1, 2, 0) * 255).astype(np.uint8)
        cv2.imwrite(str(root / "images" / f"{s.id}.png"), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
        cv2.imwrite(str(root / "masks" / f"{s.id}.png"), (s.mask[0] * 255).astype(np.uint8))
        if s.fov is not None:
            cv2.imwrite(str(root / "fov" / f"{s.id}.png"), (s.fov[0] * 255).astype(np.uint8))
