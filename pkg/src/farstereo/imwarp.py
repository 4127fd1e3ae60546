"""Inverse-mapped affine warping of rasters.

Intensity images use bilinear sampling; depth-like rasters use nearest
neighbor so values are never blended across discontinuities.  Output pixels
whose source falls outside the input (or on an invalid input pixel) are
marked invalid.
"""

from __future__ import annotations

import numpy as np

from .geometry import AffineTransform


def _source_coords(transform: AffineTransform, out_shape: tuple[int, int]):
    h, w = out_shape
    inv = transform.inverse()
    uo, vo = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    a, t = inv.m[:, :2], inv.m[:, 2]
    xs = a[0, 0] * uo + a[0, 1] * vo + t[0]
    ys = a[1, 0] * uo + a[1, 1] * vo + t[1]
    return xs, ys


def warp_bilinear(image: np.ndarray, valid: np.ndarray | None,
                  transform: AffineTransform,
                  out_shape: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Warp ``image`` so that output pixel p' holds ``image[transform^-1 p']``.

    Returns ``(warped, valid_mask)``; invalid output pixels are set to 0.
    A pixel is valid only if all four bilinear taps are valid.
    """
    image = np.asarray(image, dtype=np.float64)
    if valid is None:
        valid = np.ones(image.shape, dtype=bool)
    out_shape = image.shape if out_shape is None else out_shape
    xs, ys = _source_coords(transform, out_shape)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    inside = (x0 >= 0) & (y0 >= 0) & (x0 <= image.shape[1] - 2) & (y0 <= image.shape[0] - 2)
    x0c = np.clip(x0, 0, image.shape[1] - 2)
    y0c = np.clip(y0, 0, image.shape[0] - 2)
    img = np.where(valid, image, 0.0)
    out = (img[y0c, x0c] * (1 - fx) * (1 - fy)
           + img[y0c, x0c + 1] * fx * (1 - fy)
           + img[y0c + 1, x0c] * (1 - fx) * fy
           + img[y0c + 1, x0c + 1] * fx * fy)
    ok = (inside & valid[y0c, x0c] & valid[y0c, x0c + 1]
          & valid[y0c + 1, x0c] & valid[y0c + 1, x0c + 1])
    out[~ok] = 0.0
    return out, ok


def warp_nearest(values: np.ndarray, valid: np.ndarray | None,
                 transform: AffineTransform,
                 out_shape: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor inverse-mapped warp; values pass through unchanged."""
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.ones(values.shape, dtype=bool)
    out_shape = values.shape if out_shape is None else out_shape
    xs, ys = _source_coords(transform, out_shape)
    xn = np.round(xs).astype(np.int64)
    yn = np.round(ys).astype(np.int64)
    inside = (xn >= 0) & (yn >= 0) & (xn < values.shape[1]) & (yn < values.shape[0])
    xc = np.clip(xn, 0, values.shape[1] - 1)
    yc = np.clip(yn, 0, values.shape[0] - 1)
    out = values[yc, xc]
    ok = inside & valid[yc, xc]
    out[~ok] = 0.0
    return out, ok
