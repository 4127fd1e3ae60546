"""Grayscale PNG input/output for intensity images.

Images are handled internally as float rasters in [0, 1].  8-bit and 16-bit
grayscale PNGs are read natively; color inputs are converted by luminance.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def read_gray(path) -> np.ndarray:
    """Load a PNG as a float image in [0, 1]."""
    img = Image.open(path)
    if img.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return arr / 65535.0
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.float64) / 255.0


def write_gray(path, image: np.ndarray, bits: int = 16) -> None:
    """Write a [0, 1] float image as an 8- or 16-bit grayscale PNG."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if bits == 8:
        Image.fromarray((image * 255.0 + 0.5).astype(np.uint8)).save(path)
    elif bits == 16:
        Image.fromarray((image * 65535.0 + 0.5).astype(np.uint16)).save(path)
    else:
        raise ValueError("bits must be 8 or 16")
