"""Portable Float Map I/O, grayscale ("Pf") variant only.

Layout: header line ``Pf``, a ``width height`` line, a scale line whose sign
encodes endianness (we always write ``-1.000000``, little-endian), then rows
of 4-byte floats stored bottom-to-top.  Invalid pixels are stored as the
``-inf`` sentinel; readers turn them back into a validity mask.
"""

from __future__ import annotations

import numpy as np

INVALID_SENTINEL = -np.inf


class PfmFormatError(ValueError):
    """Malformed or unsupported PFM content."""


def pfm_write(path, raster: np.ndarray, valid: np.ndarray | None = None) -> None:
    """Write a 2D float raster; ``valid=False`` pixels become ``-inf``.

    Finite values and the ``-inf`` sentinel are the only admissible contents;
    NaN or ``+inf`` raise.
    """
    raster = np.asarray(raster, dtype=np.float32)
    if raster.ndim != 2:
        raise PfmFormatError(f"expected a 2D raster, got shape {raster.shape}")
    data = raster.copy()
    if valid is not None:
        data[~np.asarray(valid, dtype=bool)] = INVALID_SENTINEL
    bad = np.isnan(data) | np.isposinf(data)
    if bad.any():
        raise PfmFormatError("raster contains NaN or +inf; only finite values "
                             "and the -inf invalid sentinel are writable")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.000000\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def pfm_read(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a grayscale PFM; returns ``(values, valid)``.

    Color ("PF") files are rejected as an unsupported variant.
    """
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip()
        if magic == b"PF":
            raise PfmFormatError("color PFM ('PF') is an unsupported variant")
        if magic != b"Pf":
            raise PfmFormatError(f"not a PFM file (magic {magic!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise PfmFormatError("malformed dimensions line")
        try:
            w, h = int(dims[0]), int(dims[1])
        except ValueError as exc:
            raise PfmFormatError("malformed dimensions line") from exc
        if w <= 0 or h <= 0:
            raise PfmFormatError("non-positive dimensions")
        try:
            scale = float(fh.readline())
        except ValueError as exc:
            raise PfmFormatError("malformed scale line") from exc
        if scale == 0:
            raise PfmFormatError("zero scale")
        dtype = "<f4" if scale < 0 else ">f4"
        payload = fh.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise PfmFormatError("truncated payload")
    values = np.flipud(np.frombuffer(payload, dtype=dtype).reshape(h, w)).astype(np.float64)
    valid = ~np.isneginf(values)
    values = np.where(valid, values, 0.0)
    return values, valid
