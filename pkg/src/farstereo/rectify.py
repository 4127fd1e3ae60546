"""Pseudo-rectification: estimate a constrained affine pair by RANSAC on the
equal-y condition, complete it by norm/determinant constraints, set the
disparity margin, and warp.

The y-row system solved per trial is homogeneous in five unknowns (the left
transform's y-row, with its translation pinned to zero, and the right
transform's full y-row).  Two numerical details matter in practice and are
handled explicitly here:

* Coordinates are centered and scaled before solving, and the left y-row is
  constrained to unit norm *inside* the solver (a reduced 2x2 eigenproblem)
  rather than rescaled after a plain homogeneous SVD.  An unnormalized
  homogeneous solve mixes pixel-scale coefficients with a free constant and
  reliably picks poor solutions.
* The equal-y condition is nearly invariant to rotating both rectified frames
  by a common angle (the residual it adds is only the in-scene disparity
  spread, a couple of pixels here, times the sine of that angle).  After the
  RANSAC polish, the solution is therefore re-gauged to the member of this
  family whose left transform is upright, which keeps the warped canvas
  aligned with the input and treats the left view as the reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import MatchSet
from .geometry import AffineTransform
from .imwarp import warp_bilinear

DEFAULT_PHI = 50.0
DEFAULT_TRIALS = 2000
EARLY_EXIT_RATIO = 0.98
EARLY_EXIT_STREAK = 200


class DegenerateSampleError(ValueError):
    """Sampled matches do not determine the row parameters."""


class RectificationUnreliableError(RuntimeError):
    """Best RANSAC consensus is below the reliability threshold."""


@dataclass(frozen=True)
class RansacParams:
    """RANSAC controls: sample size ``m``, trial count, inlier threshold (px)."""

    m: int = 10
    trials: int = DEFAULT_TRIALS
    epsilon: float = 2.0

    def __post_init__(self):
        if self.m < 5:
            raise ValueError("m must be at least 5 (the system has 5 unknowns)")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class AffineRectification:
    """The rectifying pair plus consensus statistics."""

    h_l: AffineTransform
    h_r: AffineTransform
    inlier_count: int
    inlier_ratio: float

    def save_text(self, path, seed: int | None = None) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for name, mat in (("h_l", self.h_l.m), ("h_r", self.h_r.m)):
                for r in range(2):
                    fh.write(f"{name}_row{r} = " + " ".join(f"{float(v)!r}" for v in mat[r]) + "\n")
            fh.write(f"inlier_count = {self.inlier_count}\n")
            fh.write(f"inlier_ratio = {float(self.inlier_ratio)!r}\n")
            if seed is not None:
                fh.write(f"seed = {seed}\n")


def _solve_rows_normalized(a_uv: np.ndarray, b_uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the equal-y system for one match subset.

    Minimizes ``|<h_l, x_l> - <h_r, x_r>|`` over unit-norm left row (h_l
    translation pinned to zero) with centered, scaled coordinates.  Returns
    ``(row_l, row_r)`` as length-3 arrays.  Raises
    :class:`DegenerateSampleError` for underdetermined or rank-deficient
    subsets.
    """
    n = len(a_uv)
    if n < 5:
        raise DegenerateSampleError(f"need at least 5 matches, got {n}")
    am = a_uv.mean(axis=0)
    bm = b_uv.mean(axis=0)
    scale = np.sqrt(np.mean(np.sum((a_uv - am) ** 2, axis=1)) / 2.0)
    if scale < 1e-9:
        raise DegenerateSampleError("left keypoints are coincident")
    an = (a_uv - am) / scale
    bn = np.column_stack([(b_uv - bm) / scale, np.ones(n)])

    q, r = np.linalg.qr(bn)
    if np.abs(np.diag(r)).min() < 1e-9:
        raise DegenerateSampleError("right-side design matrix is rank deficient")
    proj = an - q @ (q.T @ an)
    m2 = proj.T @ proj
    # infinitesimal preference for an upright left row breaks exact ties only
    m2 = m2 + np.diag([1e-12 * max(m2.trace(), 1e-30), 0.0])
    evals, evecs = np.linalg.eigh(m2)
    if evals[1] <= 1e-12 * max(m2.trace(), 1e-300):
        raise DegenerateSampleError("no preferred row direction (degenerate sample)")
    h = evecs[:, 0]
    g = np.linalg.solve(r, q.T @ (an @ h))

    a, b = h[0] / scale, h[1] / scale
    c, d = g[0] / scale, g[1] / scale
    e = g[2] + (h[0] * am[0] + h[1] * am[1]) / scale - (g[0] * bm[0] + g[1] * bm[1]) / scale
    norm_l = np.hypot(a, b)
    if norm_l < 1e-15:
        raise DegenerateSampleError("left row collapsed to zero")
    row = np.array([a, b, c, d, e]) / norm_l
    if row[1] < 0:
        row = -row
    return np.array([row[0], row[1], 0.0]), np.array([row[2], row[3], row[4]])


def solve_row_params(matches: MatchSet, indices=None) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the y-rows from a match subset (all matches by default).

    Returns ``(row_l, row_r)``; ``row_l`` has unit leading 2-vector, positive
    second entry, and zero translation.
    """
    idx = np.arange(len(matches)) if indices is None else np.asarray(indices)
    return _solve_rows_normalized(matches.a[idx], matches.b[idx])


def row_residuals(row_l: np.ndarray, row_r: np.ndarray, matches: MatchSet) -> np.ndarray:
    """Per-match ``|<row_l, x_l> - <row_r, x_r>|`` in pixels."""
    ya = matches.a @ row_l[:2] + row_l[2]
    yb = matches.b @ row_r[:2] + row_r[2]
    return np.abs(ya - yb)


def count_inliers(row_l: np.ndarray, row_r: np.ndarray, matches: MatchSet,
                  epsilon: float) -> int:
    """Number of matches with equal-y residual strictly below ``epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if len(matches) == 0:
        return 0
    return int(np.count_nonzero(row_residuals(row_l, row_r, matches) < epsilon))


def complete_first_rows(row_l: np.ndarray, row_r: np.ndarray) -> tuple[AffineTransform, AffineTransform]:
    """Fill in the u-rows: same norm as the y-row, orthogonal, positive det.

    The unique such completion of a row ``(a, b)`` is ``(b, -a)`` (rescaled to
    the same norm, which is automatic).  Translations stay zero; the right
    one is set later by the disparity margin.
    """
    for row in (row_l, row_r):
        if np.hypot(row[0], row[1]) < 1e-15:
            raise ValueError("cannot complete a zero y-row")
    h_l = AffineTransform(np.array([[row_l[1], -row_l[0], 0.0],
                                    [row_l[0], row_l[1], row_l[2]]]))
    h_r = AffineTransform(np.array([[row_r[1], -row_r[0], 0.0],
                                    [row_r[0], row_r[1], row_r[2]]]))
    return h_l, h_r


def set_disparity_margin(h_l: AffineTransform, h_r: AffineTransform,
                         matches: MatchSet, phi: float = DEFAULT_PHI,
                         inlier_mask: np.ndarray | None = None) -> AffineTransform:
    """Fix the right transform's horizontal offset from the match statistics.

    ``H_r[0,2]`` is set to the 1-percentile (linear interpolation between
    order statistics) of the rectified u-differences minus the protective
    margin ``phi``, so at least 99% of the inlier matches end up with
    disparity ``u_l' - u_r' >= phi``.
    """
    mask = np.ones(len(matches), dtype=bool) if inlier_mask is None else inlier_mask
    if not mask.any():
        raise ValueError("no inlier matches to set the disparity margin from")
    du = (matches.a[mask] @ h_l.m[0, :2] + h_l.m[0, 2]
          - matches.b[mask] @ h_r.m[0, :2])
    offset = float(np.percentile(du - phi, 1.0))
    m = h_r.m.copy()
    m[0, 2] = offset
    return AffineTransform(m)


def _canonicalize_upright(row_l: np.ndarray, row_r: np.ndarray,
                          matches: MatchSet, epsilon: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Re-gauge the solved pair so the left transform is upright.

    Rotating both (completed) transforms by the left row's angle is an exact
    symmetry of the equal-y condition up to the in-scene disparity spread;
    afterwards the right row's constant is refit on the inliers.  Returns
    ``(row_l, row_r, inlier_mask)``.
    """
    sin_psi, cos_psi = row_l[0], row_l[1]
    # y-row of Rot(-psi) @ H: -sin * u_row + cos * v_row, with u_row = (b, -a)
    new_l = np.array([0.0, 1.0, 0.0])
    new_r = np.array([-sin_psi * row_r[1] + cos_psi * row_r[0],
                      sin_psi * row_r[0] + cos_psi * row_r[1],
                      cos_psi * row_r[2]])
    # the family operation shifts the constant by sin(psi) times the mean
    # u-difference; recover it robustly, then settle on the inlier mean
    resid = matches.a @ new_l[:2] - matches.b @ new_r[:2]
    new_r[2] = float(np.median(resid))
    mask = np.abs(resid - new_r[2]) < epsilon
    for _ in range(10):
        if not mask.any():
            break
        new_r[2] = float(resid[mask].mean())
        new_mask = np.abs(resid - new_r[2]) < epsilon
        if (new_mask == mask).all():
            break
        mask = new_mask
    return new_l, new_r, mask


def pseudo_rectify(left: np.ndarray, right: np.ndarray, matches: MatchSet,
                   params: RansacParams = RansacParams(), phi: float = DEFAULT_PHI,
                   seed: int = 0, min_inlier_ratio: float = 0.3):
    """Estimate the rectifying affine pair and warp both images.

    Runs seeded RANSAC over the equal-y system, keeps the candidate with the
    most inliers (ties to the earliest trial), polishes it by re-solving on
    the consensus set, re-gauges to the upright-left member, completes the
    u-rows, sets the disparity margin from the final inliers, and warps both
    images by bilinear inverse mapping.

    Returns ``(rectification, (left_rect, left_valid), (right_rect, right_valid))``.
    """
    n = len(matches)
    if n < params.m:
        raise ValueError(f"need at least {params.m} matches, got {n}")
    rng = np.random.default_rng(seed)

    best_count = -1
    best_rows = None
    streak = 0
    for _ in range(params.trials):
        idx = rng.choice(n, params.m, replace=False)
        try:
            row_l, row_r = solve_row_params(matches, idx)
        except DegenerateSampleError:
            continue
        cnt = count_inliers(row_l, row_r, matches, params.epsilon)
        if cnt > best_count:
            best_count = cnt
            best_rows = (row_l, row_r)
            streak = 0
        elif best_count / n > EARLY_EXIT_RATIO:
            streak += 1
            if streak >= EARLY_EXIT_STREAK:
                break
    if best_rows is None:
        raise DegenerateSampleError("every RANSAC trial was degenerate")

    # polish: re-solve on the consensus set until it stabilizes
    row_l, row_r = best_rows
    mask = row_residuals(row_l, row_r, matches) < params.epsilon
    for _ in range(20):
        try:
            row_l, row_r = solve_row_params(matches, np.nonzero(mask)[0])
        except DegenerateSampleError:
            break
        new_mask = row_residuals(row_l, row_r, matches) < params.epsilon
        if (new_mask == mask).all():
            break
        mask = new_mask

    row_l, row_r, mask = _canonicalize_upright(row_l, row_r, matches, params.epsilon)
    inlier_count = int(mask.sum())
    inlier_ratio = inlier_count / n
    if inlier_ratio < min_inlier_ratio:
        raise RectificationUnreliableError(
            f"inlier ratio {inlier_ratio:.3f} below {min_inlier_ratio}")

    h_l, h_r = complete_first_rows(row_l, row_r)
    h_r = set_disparity_margin(h_l, h_r, matches, phi, mask)
    rect = AffineRectification(h_l=h_l, h_r=h_r,
                               inlier_count=inlier_count, inlier_ratio=inlier_ratio)
    matches.inlier_flags = mask
    left_rect = warp_bilinear(left, None, h_l)
    right_rect = warp_bilinear(right, None, h_r)
    return rect, left_rect, right_rect
