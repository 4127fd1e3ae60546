"""Sparse feature detection and matching.

Harris corners matched by normalized cross-correlation of square patches,
with mutual-best filtering, a ratio test, and sub-pixel refinement of both
endpoints via a parabola fit on the local NCC response.  The matcher is
deliberately symmetric: swapping the two images yields the same pair set
with sides exchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientMatchesError(ValueError):
    """Raised when fewer matches survive filtering than the configured minimum."""


@dataclass
class MatchSet:
    """Sub-pixel correspondences between two images.

    ``a`` and ``b`` are (N, 2) pixel arrays; ``scores`` holds per-pair match
    confidence (NCC in [-1, 1] for detected matches).  ``inlier_flags`` is
    set by downstream robust estimation; ``dropped`` reports how many
    candidates were discarded during construction.
    """

    a: np.ndarray
    b: np.ndarray
    scores: np.ndarray
    inlier_flags: np.ndarray | None = None
    dropped: int = 0

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=np.float64))
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.a.shape != self.b.shape or self.a.shape[1] != 2:
            raise ValueError("match arrays must both be (N, 2)")
        if len(self.scores) != len(self.a):
            raise ValueError("scores length mismatch")

    def __len__(self) -> int:
        return len(self.a)

    def swapped(self) -> "MatchSet":
        return MatchSet(a=self.b.copy(), b=self.a.copy(), scores=self.scores.copy(),
                        inlier_flags=None if self.inlier_flags is None else self.inlier_flags.copy(),
                        dropped=self.dropped)

    def save_text(self, path) -> None:
        """One match per line: ``u_a v_a u_b v_b score``."""
        with open(path, "w", encoding="ascii") as fh:
            for (ua, va), (ub, vb), s in zip(self.a, self.b, self.scores):
                fh.write(f"{float(ua)!r} {float(va)!r} {float(ub)!r} {float(vb)!r} {float(s)!r}\n")

    @staticmethod
    def load_text(path) -> "MatchSet":
        rows = np.atleast_2d(np.loadtxt(path, dtype=np.float64))
        if rows.size == 0:
            rows = np.zeros((0, 5))
        return MatchSet(a=rows[:, 0:2], b=rows[:, 2:4], scores=rows[:, 4])


@dataclass(frozen=True)
class MatcherParams:
    harris_k: float = 0.04
    nms_radius: int = 5
    max_keypoints: int = 4000
    patch_radius: int = 7          # 15x15 patches
    ratio: float = 0.9
    min_matches: int = 30
    smoothing_sigma: float = 1.5


def _shift(arr: np.ndarray, dy: int, dx: int, fill: float) -> np.ndarray:
    out = np.full_like(arr, fill)
    h, w = arr.shape
    out[max(0, dy):min(h, h + dy), max(0, dx):min(w, w + dx)] = \
        arr[max(0, -dy):min(h, h - dy), max(0, -dx):min(w, w - dx)]
    return out


def _max_filter(resp: np.ndarray, radius: int) -> np.ndarray:
    out = resp.copy()
    for dx in range(-radius, radius + 1):
        if dx:
            out = np.maximum(out, _shift(resp, 0, dx, -np.inf))
    out2 = out.copy()
    for dy in range(-radius, radius + 1):
        if dy:
            out2 = np.maximum(out2, _shift(out, dy, 0, -np.inf))
    return out2


def _gauss_kernel(sigma: float) -> np.ndarray:
    r = int(np.ceil(3.0 * sigma))
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-xs * xs / (2.0 * sigma * sigma))
    return k / k.sum()


def _sepconv(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = len(kernel) // 2
    pad = np.pad(img, r, mode="reflect")
    tmp = np.apply_along_axis(np.convolve, 1, pad, kernel, "valid")
    return np.apply_along_axis(np.convolve, 0, tmp, kernel, "valid")


def harris_corners(image: np.ndarray, params: MatcherParams = MatcherParams(),
                   border: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Harris corner detection; returns ``(xs, ys, responses)`` strongest first.

    Non-max suppression uses the configured radius; keypoints closer than
    ``border`` pixels (default: patch radius + 1) to the edge are discarded so
    patches always fit.
    """
    image = np.asarray(image, dtype=np.float64)
    border = params.patch_radius + 2 if border is None else border
    gy, gx = np.gradient(image)
    g = _gauss_kernel(params.smoothing_sigma)
    sxx = _sepconv(gx * gx, g)
    syy = _sepconv(gy * gy, g)
    sxy = _sepconv(gx * gy, g)
    resp = sxx * syy - sxy * sxy - params.harris_k * (sxx + syy) ** 2
    peak = (resp == _max_filter(resp, params.nms_radius)) & (resp > 0)
    peak[:border, :] = False
    peak[-border:, :] = False
    peak[:, :border] = False
    peak[:, -border:] = False
    ys, xs = np.nonzero(peak)
    vals = resp[ys, xs]
    order = np.argsort(-vals, kind="stable")[:params.max_keypoints]
    return xs[order], ys[order], vals[order]


def _patches(image: np.ndarray, xs: np.ndarray, ys: np.ndarray, radius: int) -> np.ndarray:
    """Zero-mean unit-norm patch descriptors, one row per keypoint."""
    idx = np.arange(-radius, radius + 1)
    p = image[ys[:, None, None] + idx[None, :, None],
              xs[:, None, None] + idx[None, None, :]].reshape(len(xs), -1)
    p = p - p.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(p, axis=1)
    norms[norms == 0] = 1.0
    return p / norms[:, None]


def _parabola_offsets(img_a, img_b, xa, ya, xb, yb, radius):
    """Sub-pixel offset of B-side keypoints from a 3x3 NCC response fit."""
    pa = _patches(img_a, xa, ya, radius)
    grid = np.zeros((len(xa), 3, 3))
    for i, dy in enumerate((-1, 0, 1)):
        for j, dx in enumerate((-1, 0, 1)):
            pb = _patches(img_b, xb + dx, yb + dy, radius)
            grid[:, i, j] = np.einsum("ij,ij->i", pa, pb)
    dx = np.zeros(len(xa))
    dy = np.zeros(len(xa))
    den_x = grid[:, 1, 0] - 2 * grid[:, 1, 1] + grid[:, 1, 2]
    den_y = grid[:, 0, 1] - 2 * grid[:, 1, 1] + grid[:, 2, 1]
    okx = den_x < 0
    oky = den_y < 0
    dx[okx] = 0.5 * (grid[okx, 1, 0] - grid[okx, 1, 2]) / den_x[okx]
    dy[oky] = 0.5 * (grid[oky, 0, 1] - grid[oky, 2, 1]) / den_y[oky]
    return np.clip(dx, -1, 1), np.clip(dy, -1, 1)


def detect_and_match(img_a: np.ndarray, img_b: np.ndarray,
                     params: MatcherParams = MatcherParams()) -> MatchSet:
    """Detect Harris corners in both images and match them by patch NCC.

    Candidates must be mutual best matches and pass the ratio test
    (patch-space distance of best over second best below ``params.ratio``).
    Both endpoints are then refined to sub-pixel accuracy.  Matches are
    returned sorted by NCC score, descending.
    """
    img_a = np.asarray(img_a, dtype=np.float64)
    img_b = np.asarray(img_b, dtype=np.float64)
    if min(img_a.shape) < 64 or min(img_b.shape) < 64:
        raise ValueError("images must be at least 64x64")
    xa, ya, _ = harris_corners(img_a, params)
    xb, yb, _ = harris_corners(img_b, params)
    if len(xa) == 0 or len(xb) == 0:
        raise InsufficientMatchesError("no corners detected")
    pa = _patches(img_a, xa, ya, params.patch_radius)
    pb = _patches(img_b, xb, yb, params.patch_radius)
    ncc = pa @ pb.T

    best_b = ncc.argmax(axis=1)
    best_a = ncc.argmax(axis=0)
    mutual = best_a[best_b] == np.arange(len(xa))

    # ratio test on both sides, using patch L2 distance = sqrt(2 - 2 ncc)
    def ratio_ok(mat, best_idx):
        rows = np.arange(mat.shape[0])
        top = mat[rows, best_idx]
        masked = mat.copy()
        masked[rows, best_idx] = -np.inf
        second = masked.max(axis=1)
        d1 = np.sqrt(np.maximum(2.0 - 2.0 * top, 0.0))
        d2 = np.sqrt(np.maximum(2.0 - 2.0 * second, 0.0))
        return d1 <= params.ratio * d2

    ra = ratio_ok(ncc, best_b)
    rb = ratio_ok(ncc.T, best_a)
    keep = mutual & ra & rb[best_b]
    ia = np.nonzero(keep)[0]
    ib = best_b[keep]
    if len(ia) < params.min_matches:
        raise InsufficientMatchesError(
            f"{len(ia)} matches after filtering, need {params.min_matches}")

    dxb, dyb = _parabola_offsets(img_a, img_b, xa[ia], ya[ia], xb[ib], yb[ib],
                                 params.patch_radius)
    dxa, dya = _parabola_offsets(img_b, img_a, xb[ib], yb[ib], xa[ia], ya[ia],
                                 params.patch_radius)
    uv_a = np.column_stack([xa[ia] + dxa, ya[ia] + dya])
    uv_b = np.column_stack([xb[ib] + dxb, yb[ib] + dyb])
    scores = ncc[ia, ib]
    order = np.argsort(-scores, kind="stable")
    return MatchSet(a=uv_a[order], b=uv_b[order], scores=scores[order])
