"""Depth-error evaluation: relative-error maps and threshold fractions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AffineTransform
from .imwarp import warp_nearest
from .rasters import DepthMap

DEFAULT_THRESHOLDS = (0.01, 0.02, 0.03)


@dataclass
class ErrorReport:
    """Per-pixel relative depth error and fractions below thresholds."""

    relative_error: np.ndarray
    valid: np.ndarray
    fractions: dict

    @property
    def valid_pixel_count(self) -> int:
        return int(self.valid.sum())

    def save_text(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"valid_pixels = {self.valid_pixel_count}\n")
            for thr in sorted(self.fractions):
                fh.write(f"fraction_below_{float(thr)!r} = {float(self.fractions[thr])!r}\n")


def warp_depth_to_rectified(gt_depth: DepthMap, h_l: AffineTransform) -> DepthMap:
    """Resample ground-truth depth into the rectified-left frame.

    Nearest-neighbor sampling so depth values never blend across
    discontinuities; requires a rigid left transform (depth values are
    camera-frame z, which in-plane rigid warps leave meaningful).
    """
    if not h_l.is_rigid:
        raise ValueError("left rectifying transform must be rigid")
    values, valid = warp_nearest(gt_depth.values, gt_depth.valid, h_l)
    return DepthMap(values=values, valid=valid)


def relative_error_map(est: DepthMap, gt: DepthMap) -> np.ndarray:
    """Per-pixel ``|z_est - z_gt| / z_gt`` with NaN at invalid pixels."""
    if est.shape != gt.shape:
        raise ValueError("depth maps must have the same dimensions")
    both = est.valid & gt.valid & (gt.values > 0)
    if not both.any():
        raise ValueError("no jointly valid pixels")
    out = np.full(est.shape, np.nan)
    out[both] = np.abs(est.values[both] - gt.values[both]) / gt.values[both]
    return out


def threshold_fractions(relative_error: np.ndarray,
                        thresholds=DEFAULT_THRESHOLDS) -> dict:
    """Fraction of valid pixels with error strictly below each threshold."""
    valid = np.isfinite(relative_error)
    total = int(valid.sum())
    if total == 0:
        raise ValueError("no valid pixels in the error map")
    errs = relative_error[valid]
    return {float(t): float(np.count_nonzero(errs < t) / total) for t in thresholds}


def evaluate_depth(est: DepthMap, gt: DepthMap,
                   thresholds=DEFAULT_THRESHOLDS) -> ErrorReport:
    """Relative-error map plus threshold fractions in one report."""
    err = relative_error_map(est, gt)
    return ErrorReport(relative_error=err, valid=np.isfinite(err),
                       fractions=threshold_fractions(err, thresholds))


def aggregate_fractions(reports: list[ErrorReport]) -> dict:
    """Unweighted mean of per-scene fractions over successful scenes."""
    if not reports:
        raise ValueError("no reports to aggregate")
    keys = sorted(reports[0].fractions)
    return {k: float(np.mean([r.fractions[k] for r in reports])) for k in keys}


# fixed colormap for error visualizations: black -> blue -> yellow -> red,
# linear ramps with anchors at 0, 1/3, 2/3, 1 of the clipped error range
_CMAP_ANCHORS = np.array([[0, 0, 0], [0, 64, 255], [255, 220, 0], [255, 0, 0]],
                         dtype=np.float64)


def error_to_color(relative_error: np.ndarray, max_error: float = 0.05) -> np.ndarray:
    """Map an error raster to an (H, W, 3) uint8 image; invalid pixels gray."""
    t = np.clip(np.nan_to_num(relative_error, nan=0.0) / max_error, 0.0, 1.0)
    pos = t * (len(_CMAP_ANCHORS) - 1)
    i0 = np.clip(np.floor(pos).astype(int), 0, len(_CMAP_ANCHORS) - 2)
    frac = (pos - i0)[..., None]
    rgb = _CMAP_ANCHORS[i0] * (1 - frac) + _CMAP_ANCHORS[i0 + 1] * frac
    rgb[~np.isfinite(relative_error)] = (128, 128, 128)
    return rgb.astype(np.uint8)


def save_error_png(path, report: ErrorReport, max_error: float = 0.05) -> None:
    from PIL import Image

    Image.fromarray(error_to_color(report.relative_error, max_error)).save(path)
