"""Dense disparity on a rectified pair.

The default matcher is classical NCC block matching along scanlines with
winner-take-all selection, sub-pixel parabola refinement, and a left-right
consistency check.  The disparity convention is ``d = u_left - u_right``
(positive after the rectification margin step).  A ground-truth oracle
converts a depth map into exact disparities for isolation tests, and
externally computed disparity maps can be fed in through PFM files instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rasters import DepthMap


@dataclass
class DisparityMap:
    """Per-pixel disparity (px) with validity mask and resolution state.

    ``offset_resolved`` is False until the global offset left by
    pseudo-rectification has been removed.
    """

    values: np.ndarray
    valid: np.ndarray
    offset_resolved: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape:
            raise ValueError("values and valid mask must have the same shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def shifted(self, offset: float, resolved: bool = True) -> "DisparityMap":
        return DisparityMap(values=self.values + offset, valid=self.valid.copy(),
                            offset_resolved=resolved)


@dataclass(frozen=True)
class BlockMatchParams:
    window_radius: int = 4        # 9x9 window
    lr_threshold: float = 1.0     # left-right consistency (px)
    min_texture_var: float = 1e-8


def default_search_range(phi: float, f: float, c_lr: float,
                         z_min: float, z_max: float, width: int,
                         pad: float = 20.0) -> tuple[int, int]:
    """Search window derived from the margin and the configured depth range."""
    spread = f * c_lr * (1.0 / z_min - 1.0 / z_max)
    d_min = int(np.floor(max(0.0, phi - pad)))
    d_max = int(np.ceil(min(width - 1.0, phi + spread + pad)))
    return d_min, d_max


def _box_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    """Sum of each (2r+1)^2 window; out-of-image taps count as zero."""
    k = 2 * radius + 1
    padded = np.pad(arr, ((radius + 1, radius), (radius + 1, radius)))
    c = padded.cumsum(axis=0).cumsum(axis=1)
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def compute_disparity(left: np.ndarray, right: np.ndarray,
                      search: tuple[int, int],
                      params: BlockMatchParams = BlockMatchParams(),
                      left_valid: np.ndarray | None = None,
                      right_valid: np.ndarray | None = None) -> DisparityMap:
    """NCC block matching along scanlines.

    For each integer candidate disparity the window NCC is computed with box
    filters; the winner is refined by a parabola through the three
    neighboring scores.  Pixels failing the left-right consistency check (the
    right-image winner-take-all disagrees by more than ``lr_threshold``), with
    an incomplete window, or without texture are invalid.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise ValueError("rectified images must have the same shape")
    h, w = left.shape
    d_min, d_max = int(search[0]), int(search[1])
    if d_min < 0 or d_max < d_min or d_max >= w:
        raise ValueError(f"invalid search range [{d_min}, {d_max}] for width {w}")

    lv = np.ones(left.shape, bool) if left_valid is None else np.asarray(left_valid, bool)
    rv = np.ones(right.shape, bool) if right_valid is None else np.asarray(right_valid, bool)
    rad = params.window_radius
    full = (2 * rad + 1) ** 2

    lz = np.where(lv, left, 0.0)
    rz = np.where(rv, right, 0.0)
    cnt_l = _box_sum(lv.astype(np.float64), rad)
    cnt_r = _box_sum(rv.astype(np.float64), rad)
    sum_l = _box_sum(lz, rad)
    sum_ll = _box_sum(lz * lz, rad)
    sum_r = _box_sum(rz, rad)
    sum_rr = _box_sum(rz * rz, rad)
    var_l = sum_ll - sum_l * sum_l / full
    var_r = sum_rr - sum_r * sum_r / full
    full_l = cnt_l > full - 0.5
    full_r = cnt_r > full - 0.5

    disparities = np.arange(d_min, d_max + 1)
    scores = np.full((len(disparities), h, w), -np.inf, dtype=np.float32)
    for k, d in enumerate(disparities):
        cross = _box_sum(lz * _shift_right(rz, d), rad)
        sum_rs = _shift_right(sum_r, d)
        var_rs = _shift_right(var_r, d)
        ok = full_l & _shift_right(full_r, d)
        cov = cross - sum_l * sum_rs / full
        den = var_l * var_rs
        ok &= den > params.min_texture_var
        with np.errstate(invalid="ignore", divide="ignore"):
            ncc = cov / np.sqrt(np.maximum(den, 1e-300))
        scores[k] = np.where(ok, ncc, -np.inf).astype(np.float32)

    best = scores.argmax(axis=0)
    best_score = np.take_along_axis(scores, best[None], axis=0)[0]
    valid = np.isfinite(best_score.astype(np.float64))

    # sub-pixel parabola through the neighboring candidates
    inner = np.clip(best, 1, len(disparities) - 2)
    s_m = np.take_along_axis(scores, (inner - 1)[None], axis=0)[0].astype(np.float64)
    s_0 = np.take_along_axis(scores, inner[None], axis=0)[0].astype(np.float64)
    s_p = np.take_along_axis(scores, (inner + 1)[None], axis=0)[0].astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = s_m - 2.0 * s_0 + s_p
        frac = np.where((denom < 0) & (best == inner)
                        & np.isfinite(s_m) & np.isfinite(s_p),
                        0.5 * (s_m - s_p) / denom, 0.0)
    disp = disparities[best] + np.clip(frac, -1.0, 1.0)

    # right-image winner-take-all from the same score volume:
    # score_right(x, d) = score_left(x + d, d)
    scores_r = np.full_like(scores, -np.inf)
    for k, d in enumerate(disparities):
        if d == 0:
            scores_r[k] = scores[k]
        else:
            scores_r[k, :, :w - d] = scores[k, :, d:]
    best_r = scores_r.argmax(axis=0)
    disp_r = disparities[best_r]
    xr = np.rint(np.arange(w)[None, :] - disp).astype(np.int64)
    in_img = (xr >= 0) & (xr < w)
    partner = np.where(in_img, disp_r[np.arange(h)[:, None], np.clip(xr, 0, w - 1)], np.inf)
    valid &= np.abs(disp - partner) <= params.lr_threshold

    disp = np.where(valid, disp, 0.0)
    return DisparityMap(values=disp, valid=valid, offset_resolved=False)


def _shift_right(arr: np.ndarray, d: int) -> np.ndarray:
    if d == 0:
        return arr
    out = np.zeros_like(arr)
    out[:, d:] = arr[:, :-d]
    return out


def oracle_disparity(gt_depth: DepthMap, f: float, c_lr: float,
                     synthetic_offset: float = 0.0) -> DisparityMap:
    """Exact disparity from ground-truth depth in the rectified-left frame.

    ``d = f * c_lr / z + synthetic_offset``; the offset emulates the unknown
    shift introduced by pseudo-rectification.  Non-positive depths are marked
    invalid.
    """
    valid = gt_depth.valid & (gt_depth.values > 0)
    with np.errstate(divide="ignore"):
        vals = np.where(valid, f * c_lr / np.where(valid, gt_depth.values, 1.0), 0.0)
    return DisparityMap(values=vals + np.where(valid, synthetic_offset, 0.0),
                        valid=valid, offset_resolved=False)
