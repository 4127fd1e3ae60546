"""Two-view structure-from-motion simulation exhibiting the bas-relief
ambiguity of small-baseline, small-FOV stereo.

Surface points are projected into a translated camera pair, the right-view
pixels are perturbed with Gaussian noise, and the relative pose is recovered
by the normalized 8-point algorithm followed by a maximum-likelihood
refinement that minimizes point-to-epipolar-line distance (the exact ML cost
here, since only the right view carries noise).  Under this near-orthographic
geometry the recovered rotation about the axis orthogonal to the baseline
absorbs almost all of the estimation error while the other angles and the
translation direction stay tight; the reconstructed cloud is correspondingly
distorted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import camera_from_fov, project_world, rotation_to_euler
from .synthscene import FULL_HEIGHT, FULL_WIDTH, SurfaceParams, gaussian_height


class DegenerateConfigurationError(ValueError):
    """Point configuration cannot determine an essential matrix."""


class CheiralityError(RuntimeError):
    """No decomposition branch places the points in front of both cameras."""


@dataclass(frozen=True)
class SfmSimConfig:
    """Simulation constants; defaults reproduce the reference experiment."""

    surface: SurfaceParams = SurfaceParams(a=300.0, b=300.0, sigma=10.0)
    n_points: int = 1500
    noise_std: float = 1.0 / np.sqrt(2.0)   # per-axis std, px (2D RMS = 1 px)
    width: int = FULL_WIDTH
    height: int = FULL_HEIGHT
    fov_deg: float = 6.0
    baseline: tuple[float, float, float] = (2.0, 0.0, 0.0)
    sample_radius: float | None = None       # default 3 * sigma
    runs: int = 20
    seed: int = 0
    refine: bool = True

    def __post_init__(self):
        if self.n_points < 8:
            raise ValueError("n_points must be at least 8")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass
class SfmSimReport:
    """Per-run pose/structure errors plus median aggregates."""

    rot_err_x: np.ndarray
    rot_err_y: np.ndarray
    rot_err_z: np.ndarray
    trans_err_deg: np.ndarray
    point_rmse: np.ndarray
    points_used: np.ndarray
    failures: int = 0

    @property
    def medians(self) -> dict:
        return {
            "rot_err_x": float(np.median(np.abs(self.rot_err_x))),
            "rot_err_y": float(np.median(np.abs(self.rot_err_y))),
            "rot_err_z": float(np.median(np.abs(self.rot_err_z))),
            "trans_err_deg": float(np.median(np.abs(self.trans_err_deg))),
            "point_rmse": float(np.median(self.point_rmse)),
        }

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("run,rot_err_x_deg,rot_err_y_deg,rot_err_z_deg,trans_err_deg,point_rmse_m,points\n")
            for i in range(len(self.rot_err_x)):
                fh.write(f"{i},{float(self.rot_err_x[i])!r},{float(self.rot_err_y[i])!r},"
                         f"{float(self.rot_err_z[i])!r},{float(self.trans_err_deg[i])!r},"
                         f"{float(self.point_rmse[i])!r},{int(self.points_used[i])}\n")

    def save_text(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for key, value in self.medians.items():
                fh.write(f"median_{key} = {value!r}\n")
            fh.write(f"runs = {len(self.rot_err_x)}\n")
            fh.write(f"failures = {self.failures}\n")


def _hartley_normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)))
    s = np.sqrt(2.0) / max(rms, 1e-300)
    t = np.array([[s, 0.0, -s * mean[0]], [0.0, s, -s * mean[1]], [0.0, 0.0, 1.0]])
    norm = np.column_stack([(pts - mean) * s, np.ones(len(pts))])
    return norm, t


def _eight_point(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    n1, t1 = _hartley_normalize(x1)
    n2, t2 = _hartley_normalize(x2)
    a = np.column_stack([
        n2[:, 0] * n1[:, 0], n2[:, 0] * n1[:, 1], n2[:, 0],
        n2[:, 1] * n1[:, 0], n2[:, 1] * n1[:, 1], n2[:, 1],
        n1[:, 0], n1[:, 1], np.ones(len(n1)),
    ])
    # full_matrices so vt[-1] is the null direction even for minimal samples
    _, svals, vt = np.linalg.svd(a, full_matrices=True)
    if svals[7] < 1e-12 * max(svals[0], 1e-300):
        raise DegenerateConfigurationError("point configuration is rank deficient")
    e = vt[-1].reshape(3, 3)
    e = t2.T @ e @ t1
    u, s, vt = np.linalg.svd(e)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt


def sampson_distance(e: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Squared Sampson distance per correspondence (normalized units)."""
    x1h = np.column_stack([x1, np.ones(len(x1))])
    x2h = np.column_stack([x2, np.ones(len(x2))])
    ex1 = x1h @ e.T
    etx2 = x2h @ e
    num = np.einsum("ij,ij->i", x2h, ex1) ** 2
    den = ex1[:, 0] ** 2 + ex1[:, 1] ** 2 + etx2[:, 0] ** 2 + etx2[:, 1] ** 2
    return num / np.maximum(den, 1e-300)


def estimate_essential(x1: np.ndarray, x2: np.ndarray, ransac: bool = False,
                       threshold: float = 1e-4, trials: int = 200,
                       seed: int = 0) -> np.ndarray:
    """Essential matrix from calibrated correspondences (``x2^T E x1 = 0``).

    Normalized 8-point algorithm with the equal-singular-value projection.
    With ``ransac=True`` a Sampson-distance consensus loop precedes a final
    solve on the inliers (for inputs that may contain outliers).
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if len(x1) < 8 or len(x1) != len(x2):
        raise ValueError("need at least 8 paired correspondences")
    if not ransac:
        return _eight_point(x1, x2)
    rng = np.random.default_rng(seed)
    best_mask = None
    for _ in range(trials):
        idx = rng.choice(len(x1), 8, replace=False)
        try:
            e = _eight_point(x1[idx], x2[idx])
        except DegenerateConfigurationError:
            continue
        mask = sampson_distance(e, x1, x2) < threshold ** 2
        if best_mask is None or mask.sum() > best_mask.sum():
            best_mask = mask
    if best_mask is None or best_mask.sum() < 8:
        raise DegenerateConfigurationError("RANSAC found no usable consensus")
    return _eight_point(x1[best_mask], x2[best_mask])


def _triangulate_midpoint(r: np.ndarray, t: np.ndarray,
                          x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Midpoint triangulation in the first camera frame, vectorized.

    Solves, per point, the normal equations of ``min |s d1 - (c2 + w d2)|``:
    ``s g11 - w c = d1.c2`` and ``s c - w g22 = d2.c2``.
    """
    d1 = np.column_stack([x1, np.ones(len(x1))])
    d2 = (r.T @ np.column_stack([x2, np.ones(len(x2))]).T).T
    c2 = -r.T @ t
    g11 = np.einsum("ij,ij->i", d1, d1)
    g22 = np.einsum("ij,ij->i", d2, d2)
    c = np.einsum("ij,ij->i", d1, d2)
    b1 = d1 @ c2
    b2 = d2 @ c2
    gram = g11 * g22 - c * c
    gram = np.where(np.abs(gram) < 1e-300, 1e-300, gram)
    s = (b1 * g22 - c * b2) / gram
    w = (c * b1 - g11 * b2) / gram
    p1 = d1 * s[:, None]
    p2 = c2 + d2 * w[:, None]
    return 0.5 * (p1 + p2)


def decompose_and_triangulate(e: np.ndarray, x1: np.ndarray,
                              x2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pick the cheirality-consistent ``(R, t)`` and triangulate the points.

    Returns ``(R, t_unit, points)`` with ``X_2 = R X_1 + t`` and points in the
    first camera frame (translation scale arbitrary, ``|t| = 1``).
    """
    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    best = None
    counts = []
    for r in (u @ w @ vt, u @ w.T @ vt):
        for t in (u[:, 2], -u[:, 2]):
            pts = _triangulate_midpoint(r, t, x1, x2)
            z1 = pts[:, 2]
            z2 = (r @ pts.T + t[:, None])[2]
            good = int(np.count_nonzero((z1 > 0) & (z2 > 0)))
            counts.append(good)
            if best is None or good > best[0]:
                best = (good, r, t, pts)
    counts.sort(reverse=True)
    if counts[0] == counts[1]:
        raise CheiralityError(
            f"ambiguous decomposition: front-point counts {counts}")
    return best[1], best[2], best[3]


def _rodrigues(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    if theta < 1e-14:
        return np.eye(3)
    k = w / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def _epipolar_line_residuals(r, t, x1, x2):
    tx = np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0.0]])
    e = tx @ r
    x1h = np.column_stack([x1, np.ones(len(x1))])
    x2h = np.column_stack([x2, np.ones(len(x2))])
    lines = x1h @ e.T
    return np.einsum("ij,ij->i", x2h, lines) / np.hypot(lines[:, 0], lines[:, 1])


def refine_pose_epipolar(r: np.ndarray, t: np.ndarray, x1: np.ndarray,
                         x2: np.ndarray, iters: int = 30) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton on point-to-epipolar-line distance in the second view.

    This is the maximum-likelihood pose estimate when only the second view's
    observations are noisy; five parameters (rotation vector plus the
    translation direction's tangent plane).
    """
    t = t / np.linalg.norm(t)
    eps = 1e-7
    for _ in range(iters):
        anchor = np.array([1.0, 0, 0]) if abs(t[0]) < 0.9 else np.array([0, 1.0, 0])
        b1 = np.cross(t, anchor)
        b1 /= np.linalg.norm(b1)
        b2 = np.cross(t, b1)
        r0 = _epipolar_line_residuals(r, t, x1, x2)
        jac = np.empty((len(r0), 5))
        for k in range(3):
            w = np.zeros(3)
            w[k] = eps
            jac[:, k] = (_epipolar_line_residuals(_rodrigues(w) @ r, t, x1, x2) - r0) / eps
        for k, basis in enumerate((b1, b2)):
            tn = t + eps * basis
            tn /= np.linalg.norm(tn)
            jac[:, 3 + k] = (_epipolar_line_residuals(r, tn, x1, x2) - r0) / eps
        step, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
        r = _rodrigues(step[:3]) @ r
        t = t + step[3] * b1 + step[4] * b2
        t /= np.linalg.norm(t)
        if np.linalg.norm(step) < 1e-12:
            break
    return r, t


def _sample_disc_in_frame(cfg: SfmSimConfig, cam_l, cam_r, rng):
    """Surface points on the disc whose projections land in both frames."""
    radius = 3.0 * cfg.surface.sigma if cfg.sample_radius is None else cfg.sample_radius
    rr = radius * np.sqrt(rng.uniform(0.0, 1.0, cfg.n_points))
    th = rng.uniform(0.0, 2.0 * np.pi, cfg.n_points)
    x = rr * np.cos(th)
    y = rr * np.sin(th)
    pts = np.column_stack([x, y, gaussian_height(x, y, cfg.surface)])
    uv_l, _ = project_world(pts, cam_l)
    uv_r, _ = project_world(pts, cam_r)

    def inside(uv, cam):
        return ((uv[:, 0] >= 0) & (uv[:, 0] <= cam.width - 1)
                & (uv[:, 1] >= 0) & (uv[:, 1] <= cam.height - 1))

    keep = inside(uv_l, cam_l) & inside(uv_r, cam_r)
    return pts[keep], uv_l[keep], uv_r[keep]


def simulate_two_view_sfm(cfg: SfmSimConfig = SfmSimConfig()) -> SfmSimReport:
    """Run the noisy two-view SfM experiment and collect per-run errors.

    Ground truth: both cameras identity-oriented, the second offset by the
    baseline.  Correspondences falling outside either frame are dropped; the
    recovered translation is rescaled to the true camera distance before the
    cloud RMSE is computed.
    """
    fov = np.deg2rad(cfg.fov_deg)
    cam_l = camera_from_fov(fov, cfg.width, cfg.height)
    cam_r = camera_from_fov(fov, cfg.width, cfg.height, center=np.asarray(cfg.baseline))
    k_inv = np.linalg.inv(cam_l.k_matrix)
    t_gt = -np.asarray(cfg.baseline, dtype=np.float64)
    t_gt_unit = t_gt / np.linalg.norm(t_gt)
    base_dist = float(np.linalg.norm(cfg.baseline))

    rows = []
    failures = 0
    master = np.random.SeedSequence(cfg.seed)
    for run_seq in master.spawn(cfg.runs):
        rng = np.random.default_rng(run_seq)
        try:
            pts, uv_l, uv_r = _sample_disc_in_frame(cfg, cam_l, cam_r, rng)
            if len(pts) < 8:
                raise DegenerateConfigurationError("fewer than 8 in-frame points")
            if cfg.noise_std > 0:
                uv_r = uv_r + rng.normal(0.0, cfg.noise_std, uv_r.shape)
            x1 = (np.column_stack([uv_l, np.ones(len(uv_l))]) @ k_inv.T)[:, :2]
            x2 = (np.column_stack([uv_r, np.ones(len(uv_r))]) @ k_inv.T)[:, :2]
            e = estimate_essential(x1, x2)
            r, t, _ = decompose_and_triangulate(e, x1, x2)
            if cfg.refine:
                r, t = refine_pose_epipolar(r, t, x1, x2)
            cloud = _triangulate_midpoint(r, t, x1, x2)
            alpha, beta, gamma = rotation_to_euler(r)
            cos_t = np.clip(float(t @ t_gt_unit), -1.0, 1.0)
            trans_err = np.degrees(np.arccos(cos_t))
            scale = base_dist / np.linalg.norm(-r.T @ t)
            rmse = float(np.sqrt(np.mean(np.sum((cloud * scale - pts) ** 2, axis=1))))
            rows.append((np.degrees(gamma), np.degrees(beta), np.degrees(alpha),
                         trans_err, rmse, len(pts)))
        except (DegenerateConfigurationError, CheiralityError):
            failures += 1
    arr = np.array(rows) if rows else np.zeros((0, 6))
    return SfmSimReport(rot_err_x=arr[:, 0], rot_err_y=arr[:, 1], rot_err_z=arr[:, 2],
                        trans_err_deg=arr[:, 3], point_rmse=arr[:, 4],
                        points_used=arr[:, 5], failures=failures)
