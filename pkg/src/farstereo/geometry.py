"""Pinhole cameras, rotations, and 2x3 affine transforms.

Conventions used throughout the package:

* Euler composition is fixed to ``R = R_z(alpha) @ R_y(beta) @ R_x(gamma)``.
  ``R_z`` and ``R_x`` are the standard right-handed elementary rotations;
  ``R_y(beta)`` is oriented so that a small positive ``beta`` shifts image
  content by ``-f * beta`` pixels along u (mirroring the ``-f * gamma`` row
  shift of ``R_x``).
* Pixel coordinates are continuous, origin at the top-left pixel center,
  ``u`` = column, ``v`` = row.
* Camera poses store the world-from-camera rotation and the camera center in
  world coordinates; projecting a world point uses ``X_cam = R.T @ (X - C)``.

All types are immutable values and every operation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BehindCameraError(ValueError):
    """Raised when projecting a point with non-positive camera-frame depth."""


class DegenerateGridError(ValueError):
    """Raised when a pixel grid is too degenerate to fit an affine map."""


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def rot_x(gamma: float) -> np.ndarray:
    c, s = np.cos(gamma), np.sin(gamma)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(beta: float) -> np.ndarray:
    c, s = np.cos(beta), np.sin(beta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot_z(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Rotation:
    """3D rotation with its Euler angles (z-y-x composition order)."""

    euler_x: float
    euler_y: float
    euler_z: float
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))


def rotation_from_euler(alpha: float, beta: float, gamma: float) -> Rotation:
    """Build the rotation ``R_z(alpha) @ R_y(beta) @ R_x(gamma)``.

    ``alpha`` rotates about z (in-plane), ``beta`` about y, ``gamma`` about x,
    all in radians.
    """
    m = rot_z(alpha) @ rot_y(beta) @ rot_x(gamma)
    return Rotation(euler_x=gamma, euler_y=beta, euler_z=alpha, matrix=m)


IDENTITY_ROTATION = rotation_from_euler(0.0, 0.0, 0.0)


def rotation_to_euler(matrix: np.ndarray) -> tuple[float, float, float]:
    """Recover ``(alpha, beta, gamma)`` from a rotation matrix.

    Inverse of :func:`rotation_from_euler` away from the ``|beta| = 90 deg``
    singularity; stable for the small angles this package works with.
    """
    m = np.asarray(matrix, dtype=np.float64)
    beta = np.arcsin(np.clip(m[2, 0], -1.0, 1.0))
    alpha = np.arctan2(m[1, 0], m[0, 0])
    gamma = np.arctan2(m[2, 1], m[2, 2])
    return float(alpha), float(beta), float(gamma)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: focal length and principal point in pixels, plus pose."""

    f: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: Rotation
    center: np.ndarray

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image bounds")
        object.__setattr__(self, "center", _frozen(self.center))

    @property
    def fov_h(self) -> float:
        """Horizontal field of view in radians."""
        return 2.0 * np.arctan(self.width / (2.0 * self.f))

    @property
    def k_matrix(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.cx],
                         [0.0, self.f, self.cy],
                         [0.0, 0.0, 1.0]])

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (self.rotation.matrix.T @ (pts - self.center).T).T

    def cam_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return (self.rotation.matrix @ pts.T).T + self.center


def camera_from_fov(fov_h: float, width: int, height: int,
                    rotation: Rotation | None = None,
                    center=None,
                    principal_point: tuple[float, float] | None = None) -> Camera:
    """Camera with focal length derived from a horizontal FOV (radians).

    The principal point defaults to the image center.
    """
    f = (width / 2.0) / np.tan(fov_h / 2.0)
    cx, cy = principal_point if principal_point is not None else (width / 2.0, height / 2.0)
    return Camera(f=f, cx=cx, cy=cy, width=width, height=height,
                  rotation=rotation if rotation is not None else IDENTITY_ROTATION,
                  center=np.zeros(3) if center is None else np.asarray(center, float))


def project(points: np.ndarray, camera: Camera) -> np.ndarray:
    """Project camera-frame 3D points to pixels ``(u, v)``.

    ``u = f*x/z + cx``, ``v = f*y/z + cy``.  No bounds clamping; callers
    filter.  Raises :class:`BehindCameraError` if any point has ``z <= 0``.
    """
    single = np.asarray(points).ndim == 1
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    z = pts[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("point behind camera (z <= 0)")
    uv = np.stack([camera.f * pts[:, 0] / z + camera.cx,
                   camera.f * pts[:, 1] / z + camera.cy], axis=1)
    return uv[0] if single else uv


def project_world(points: np.ndarray, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Project world points; returns ``(uv, depth)`` with camera-frame z."""
    cam_pts = camera.world_to_cam(points)
    return project(cam_pts, camera), cam_pts[:, 2]


@dataclass(frozen=True)
class ThreeViewRig:
    """Left/right stereo pair plus a back camera on the left optical axis.

    ``c_lr`` is the left-right center distance; ``c_lb`` the left-back
    distance along the left camera's z-axis (the back camera sits behind the
    left one, possibly with a small height offset).
    """

    left: Camera
    right: Camera
    back: Camera
    c_lr: float
    c_lb: float

    def __post_init__(self):
        if self.c_lr <= 0 or self.c_lb <= 0:
            raise ValueError("rig distances must be positive")
        lr = float(np.linalg.norm(self.right.center - self.left.center))
        if abs(lr - self.c_lr) > 1e-9:
            raise ValueError(f"|right - left| = {lr!r} does not match c_lr = {self.c_lr!r}")
        delta = self.left.rotation.matrix.T @ (self.left.center - self.back.center)
        if abs(float(delta[2]) - self.c_lb) > 1e-9:
            raise ValueError(f"left-frame z offset {float(delta[2])!r} does not match c_lb = {self.c_lb!r}")


@dataclass(frozen=True)
class AffineTransform:
    """2x3 affine map sending homogeneous pixel ``(u, v, 1)`` to ``(u', v')``."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("affine matrix has non-finite entries")
        object.__setattr__(self, "m", _frozen(m))

    def apply(self, uv: np.ndarray) -> np.ndarray:
        """Apply to an (N, 2) or (2,) array of pixel coordinates."""
        single = np.asarray(uv).ndim == 1
        pts = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        out = pts @ self.m[:, :2].T + self.m[:, 2]
        return out[0] if single else out

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """Return the map ``self o other`` (apply ``other`` first)."""
        a = self.m[:, :2] @ other.m[:, :2]
        t = self.m[:, :2] @ other.m[:, 2] + self.m[:, 2]
        return AffineTransform(np.column_stack([a, t]))

    def inverse(self) -> "AffineTransform":
        ai = np.linalg.inv(self.m[:, :2])
        return AffineTransform(np.column_stack([ai, -ai @ self.m[:, 2]]))

    @property
    def is_rigid(self) -> bool:
        a = self.m[:, :2]
        return (abs(np.linalg.norm(a[0]) - 1.0) < 1e-9
                and abs(np.linalg.norm(a[1]) - 1.0) < 1e-9
                and abs(float(a[0] @ a[1])) < 1e-9
                and np.linalg.det(a) > 0)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @staticmethod
    def rotation_about(angle: float, pivot: tuple[float, float]) -> "AffineTransform":
        """In-plane rotation by ``angle`` (radians) about a pixel ``pivot``."""
        c, s = np.cos(angle), np.sin(angle)
        a = np.array([[c, -s], [s, c]])
        px = np.asarray(pivot, dtype=np.float64)
        return AffineTransform(np.column_stack([a, px - a @ px]))

    @staticmethod
    def translation(du: float, dv: float) -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, du], [0.0, 1.0, dv]]))


_SMALL_ROT_MAX_XY = np.deg2rad(2.0)
_SMALL_ROT_MAX_Z = np.deg2rad(10.0)


def small_rotation_affine(rotation: Rotation, camera: Camera) -> AffineTransform:
    """Affine approximation of the homography of a small camera rotation.

    For ``R = R_z(a) @ R_y(b) @ R_x(g)`` the warp ``K R K^-1`` is approximated
    by the exact in-plane rotation for ``R_z`` composed (outermost) with the
    translations ``(-f*b, 0)`` for ``R_y`` and ``(0, -f*g)`` for ``R_x``.
    Valid for ``|b|, |g| <= 2 deg`` and ``|a| <= 10 deg``; larger angles are
    rejected.
    """
    if not all(np.isfinite([rotation.euler_x, rotation.euler_y, rotation.euler_z])):
        raise ValueError("rotation angles must be finite")
    if abs(rotation.euler_x) > _SMALL_ROT_MAX_XY or abs(rotation.euler_y) > _SMALL_ROT_MAX_XY:
        raise ValueError("x/y rotation outside the small-angle validity regime (2 deg)")
    if abs(rotation.euler_z) > _SMALL_ROT_MAX_Z:
        raise ValueError("z rotation outside the small-angle validity regime (10 deg)")
    shift = AffineTransform.translation(-camera.f * rotation.euler_y,
                                        -camera.f * rotation.euler_x)
    spin = AffineTransform.rotation_about(rotation.euler_z, (camera.cx, camera.cy))
    return spin.compose(shift)


def rotation_homography(rotation: Rotation, camera: Camera) -> np.ndarray:
    """Exact pixel homography ``K R K^-1`` of a camera-frame rotation."""
    k = camera.k_matrix
    return k @ rotation.matrix @ np.linalg.inv(k)


def apply_homography(h: np.ndarray, uv: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return q[:, :2] / q[:, 2:3]


def fit_affine(src: np.ndarray, dst: np.ndarray) -> AffineTransform:
    """Least-squares 2x3 affine mapping ``src`` pixels onto ``dst`` pixels."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    a = np.column_stack([src, np.ones(len(src))])
    if len(src) < 3 or np.linalg.matrix_rank(a) < 3:
        raise DegenerateGridError("need at least 3 non-collinear points to fit an affine map")
    sol, *_ = np.linalg.lstsq(a, dst, rcond=None)
    return AffineTransform(sol.T)


def exact_rotation_homography_residual(rotation: Rotation, camera: Camera,
                                       grid: np.ndarray) -> float:
    """Max pixel distance between the exact rotation warp and its best affine fit.

    Warps ``grid`` by ``K R K^-1``, fits the least-squares affine over the
    grid, and returns the largest per-point Euclidean residual.  This is the
    verification harness for the small-rotation affine approximation.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[1] != 2 or len(grid) == 0:
        raise ValueError("grid must be a non-empty (N, 2) pixel array")
    if (np.any(grid[:, 0] < 0) or np.any(grid[:, 0] > camera.width - 1)
            or np.any(grid[:, 1] < 0) or np.any(grid[:, 1] > camera.height - 1)):
        raise ValueError("grid points must lie inside the image bounds")
    warped = apply_homography(rotation_homography(rotation, camera), grid)
    fit = fit_affine(grid, warped)
    res = np.linalg.norm(warped - fit.apply(grid), axis=1)
    return float(res.max())


def full_image_grid(camera: Camera, n: int = 32) -> np.ndarray:
    """Regular ``n x n`` grid of pixel coordinates spanning the full image."""
    us = np.linspace(0.0, camera.width - 1.0, n)
    vs = np.linspace(0.0, camera.height - 1.0, n)
    uu, vv = np.meshgrid(us, vs)
    return np.column_stack([uu.ravel(), vv.ravel()])


def relative_motion(cam_a: Camera, cam_b: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation mapping A-frame points to B-frame points.

    ``X_b = R @ X_a + t``.
    """
    r = cam_b.rotation.matrix.T @ cam_a.rotation.matrix
    t = cam_b.rotation.matrix.T @ (cam_a.center - cam_b.center)
    return r, t


def essential_matrix(cam_a: Camera, cam_b: Camera) -> np.ndarray:
    """Essential matrix with ``x_b^T E x_a = 0`` on calibrated coordinates."""
    r, t = relative_motion(cam_a, cam_b)
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    return tx @ r
