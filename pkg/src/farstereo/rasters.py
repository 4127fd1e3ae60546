"""Float rasters with validity masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DepthMap:
    """Per-pixel metric depth (camera-frame z, meters) with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape:
            raise ValueError("values and valid mask must have the same shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def masked(self) -> np.ndarray:
        """Values with invalid pixels replaced by NaN."""
        out = self.values.copy()
        out[~self.valid] = np.nan
        return out


def depth_from_values(values: np.ndarray) -> DepthMap:
    """DepthMap from a raw array; non-finite or non-positive entries invalid."""
    values = np.asarray(values, dtype=np.float64)
    valid = np.isfinite(values) & (values > 0)
    clean = np.where(valid, values, 0.0)
    return DepthMap(values=clean, valid=valid)
