"""Disparity-offset disambiguation via the back view, and depth conversion.

Two pixels of the left image with equal camera-frame depth z appear
``m_l = f * |dX| / z`` pixels apart, while in the back image (``c_lb`` behind
along the optical axis) the same points appear ``m_b = f * |dX| / (z + c_lb)``
apart, so ``z = c_lb / (m_l / m_b - 1)``.  Combining this with the
depth-to-disparity relation ``d = f * c_lr / z`` turns every suitable pair of
left-back matches into one estimate of the unknown disparity offset:

    q = f * (c_lr / c_lb) * (m_l / m_b - 1) - (d_1 + d_2) / 2

The estimates are cached over many random pairs and their median shifts the
disparity map.  Left-view match coordinates live in the raw left frame; the
disparity map lives in the rectified frame, so lookups go through the rigid
left rectifying transform (which preserves the inter-pixel distances the
formula depends on).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import MatchSet
from .geometry import AffineTransform
from .rasters import DepthMap
from .stereo import DisparityMap

FULL_RES_WIDTH = 4608  # reference width for the delta threshold


class PhysicallyInvalidPairError(ValueError):
    """Pair violates the sanity condition ``m_l > m_b``."""


class DisambiguationError(RuntimeError):
    """Too few accepted offset estimates to trust the median."""


@dataclass(frozen=True)
class DisambigParams:
    """Thresholds and budgets for offset estimation.

    ``delta`` is the minimum left-view inter-pixel distance at full
    resolution (4608 px wide); it scales linearly with the actual image
    width.  ``eta`` (max disparity difference) is resolution independent.
    """

    delta: float = 300.0
    eta: float = 3.0
    target_estimates: int = 5000
    max_trials_factor: int = 50
    min_estimates: int = 50

    def __post_init__(self):
        if self.delta <= 0 or self.eta <= 0:
            raise ValueError("delta and eta must be positive")
        if self.target_estimates < 1:
            raise ValueError("target_estimates must be at least 1")

    def delta_for_width(self, width: int) -> float:
        return self.delta * width / FULL_RES_WIDTH


@dataclass
class OffsetEstimateSet:
    """Cached offset estimates and their accepted median."""

    estimates: np.ndarray
    trials_run: int

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=np.float64)

    @property
    def accepted_offset(self) -> float:
        """Lower median of the cached estimates (exact order statistic)."""
        if len(self.estimates) == 0:
            raise DisambiguationError("no cached estimates")
        s = np.sort(self.estimates)
        return float(s[(len(s) - 1) // 2])

    def histogram(self, bins: int = 100) -> tuple[np.ndarray, np.ndarray]:
        counts, edges = np.histogram(self.estimates, bins=bins)
        return edges, counts

    def save_histogram(self, path, bins: int = 100) -> None:
        """Bin edges and counts as text, one ``lo hi count`` row per bin."""
        edges, counts = self.histogram(bins)
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"accepted_offset = {float(self.accepted_offset)!r}\n")
            fh.write(f"trials_run = {self.trials_run}\n")
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                fh.write(f"{float(lo)!r} {float(hi)!r} {int(c)}\n")


def depth_from_same_depth_pair(m_l: float, m_b: float, c_lb: float) -> float:
    """Depth of an equal-depth pixel pair from its left/back pixel distances."""
    if m_b <= 0 or m_l <= m_b:
        raise PhysicallyInvalidPairError(
            f"require m_l > m_b > 0, got m_l={m_l!r}, m_b={m_b!r}")
    return c_lb / (m_l / m_b - 1.0)


def offset_estimate(m_l: float, m_b: float, d1: float, d2: float,
                    f: float, c_lr: float, c_lb: float) -> float:
    """One disparity-offset estimate from a pair of left-back matches.

    Callers must have checked the acceptance conditions (``m_l > m_b``,
    ``m_l`` above the distance threshold, ``|d1 - d2|`` below the disparity
    threshold); the first is re-validated here since it guards the formula.
    """
    if m_b <= 0 or m_l <= m_b:
        raise PhysicallyInvalidPairError(
            f"require m_l > m_b > 0, got m_l={m_l!r}, m_b={m_b!r}")
    return f * (c_lr / c_lb) * (m_l / m_b - 1.0) - (d1 + d2) / 2.0


def remove_ambiguity(disp: DisparityMap, lb_matches: MatchSet,
                     h_l: AffineTransform, f: float, c_lr: float, c_lb: float,
                     params: DisambigParams = DisambigParams(),
                     seed: int = 0) -> tuple[DisparityMap, OffsetEstimateSet]:
    """Resolve the global disparity offset using left-back matches.

    Samples random match pairs (seeded), keeps those passing the three
    acceptance conditions with valid disparity lookups, caches offset
    estimates until the target count (or the trial budget) is reached, and
    shifts the disparity map by the median.
    """
    if disp.offset_resolved:
        raise ValueError("disparity map offset is already resolved")
    n = len(lb_matches)
    if n < 2:
        raise DisambiguationError("need at least two left-back matches")

    delta = params.delta_for_width(disp.shape[1])
    lua, lva = lb_matches.a[:, 0], lb_matches.a[:, 1]
    bua, bva = lb_matches.b[:, 0], lb_matches.b[:, 1]

    # disparity lookup at the rectified position of each left keypoint
    rect_uv = h_l.apply(lb_matches.a)
    gx = np.rint(rect_uv[:, 0]).astype(np.int64)
    gy = np.rint(rect_uv[:, 1]).astype(np.int64)
    h, w = disp.shape
    inside = (gx >= 0) & (gx < w) & (gy >= 0) & (gy < h)
    gxc = np.clip(gx, 0, w - 1)
    gyc = np.clip(gy, 0, h - 1)
    usable = inside & disp.valid[gyc, gxc]
    d_at = np.where(usable, disp.values[gyc, gxc], np.nan)

    rng = np.random.default_rng(seed)
    max_trials = params.max_trials_factor * params.target_estimates
    estimates = []
    trials = 0
    # draw pair indices in deterministic blocks; rejected pairs just cost a trial
    block = 4096
    while len(estimates) < params.target_estimates and trials < max_trials:
        take = min(block, max_trials - trials)
        ii = rng.integers(0, n, take)
        jj = rng.integers(0, n, take)
        for i, j in zip(ii, jj):
            trials += 1
            if i == j:
                continue
            if not (usable[i] and usable[j]):
                continue
            m_l = np.hypot(lua[i] - lua[j], lva[i] - lva[j])
            m_b = np.hypot(bua[i] - bua[j], bva[i] - bva[j])
            if not (m_l > m_b and m_l > delta):
                continue
            d1, d2 = d_at[i], d_at[j]
            if not abs(d1 - d2) < params.eta:
                continue
            estimates.append(f * (c_lr / c_lb) * (m_l / m_b - 1.0) - (d1 + d2) / 2.0)
            if len(estimates) >= params.target_estimates:
                break

    if len(estimates) < params.min_estimates:
        raise DisambiguationError(
            f"only {len(estimates)} accepted offset estimates after {trials} trials "
            f"(need {params.min_estimates})")
    est = OffsetEstimateSet(estimates=np.array(estimates), trials_run=trials)
    return disp.shifted(est.accepted_offset), est


def disparity_to_depth(disp: DisparityMap, f: float, c_lr: float,
                       min_disparity: float = 0.5) -> DepthMap:
    """Convert a resolved disparity map to metric depth (``z = f c_lr / d``).

    Pixels with disparity at or below ``min_disparity`` are beyond the
    measurable range and marked invalid.
    """
    if not disp.offset_resolved:
        raise ValueError("disparity offset must be resolved before depth conversion")
    valid = disp.valid & (disp.values > min_disparity)
    with np.errstate(divide="ignore"):
        z = np.where(valid, f * c_lr / np.where(valid, disp.values, 1.0), 0.0)
    return DepthMap(values=z, valid=valid)
