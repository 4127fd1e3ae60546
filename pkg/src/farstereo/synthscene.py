"""Synthetic scenes: Gaussian height surface, textured three-view renders with
ground-truth depth, and noisy sparse correspondences.

The surface is the heightfield ``z = a + b * exp(-(x^2 + y^2) / (2 sigma^2))``
extending over the whole plane; the scene's bounding box only delimits the
sampled footprint used for rig placement and correspondence sampling.
Rendering is heightfield raycasting (fixed-step march along the ray with
bisection refinement), which is deterministic and yields exact ground-truth
depth.  Surface intensity comes from multi-octave value noise evaluated at
the 3D hit point, so every image patch carries matchable detail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (Camera, ThreeViewRig, camera_from_fov, project_world,
                       rotation_from_euler)
from .rasters import DepthMap

DEFAULT_FOV_DEG = 6.0
DESK_WIDTH = 1152
DESK_HEIGHT = 864
FULL_WIDTH = 4608
FULL_HEIGHT = 3456
BASELINE_DEPTH_RATIO = 1.0 / 150.0

_MARCH_STEP_DIV = 50       # marching step = sigma / 50
_BISECTION_ITERS = 40


class TooFewMatchesError(ValueError):
    """Raised when correspondence sampling leaves fewer than 8 usable matches."""


@dataclass(frozen=True)
class SurfaceParams:
    """Gaussian bump surface: base depth ``a``, bump height ``b``, spread ``sigma``."""

    a: float
    b: float
    sigma: float

    def __post_init__(self):
        if self.a <= 0 or self.b < 0 or self.sigma <= 0:
            raise ValueError("require a > 0, b >= 0, sigma > 0")


@dataclass(frozen=True)
class SceneSpec:
    """A surface plus the axis-aligned box of its sampled region."""

    surface: SurfaceParams
    texture_seed: int
    bbox_min: tuple[float, float, float]
    bbox_max: tuple[float, float, float]

    def __post_init__(self):
        lo, hi = np.asarray(self.bbox_min), np.asarray(self.bbox_max)
        if not np.all(hi > lo):
            raise ValueError("bbox_max must exceed bbox_min componentwise")

    @property
    def diagonal(self) -> float:
        """Length of the bounding-box diagonal (meters)."""
        return float(np.linalg.norm(np.asarray(self.bbox_max) - np.asarray(self.bbox_min)))

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.bbox_min) + np.asarray(self.bbox_max))


def make_scene(surface: SurfaceParams, texture_seed: int,
               footprint_half: float | None = None) -> SceneSpec:
    """SceneSpec with a centered square footprint (default half-extent 3*sigma)."""
    w = 3.0 * surface.sigma if footprint_half is None else footprint_half
    return SceneSpec(surface=surface, texture_seed=texture_seed,
                     bbox_min=(-w, -w, surface.a),
                     bbox_max=(w, w, surface.a + surface.b))


def gaussian_height(x, y, params: SurfaceParams):
    """Surface height ``z = a + b * exp(-(x^2 + y^2) / (2 sigma^2))``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return params.a + params.b * np.exp(-(x * x + y * y) / (2.0 * params.sigma ** 2))


# ---------------------------------------------------------------------------
# value-noise texture

_MIX1 = 0x9E3779B97F4A7C15
_MIX2 = 0xC2B2AE3D27D4EB4F
_MIX3 = 0xBF58476D1CE4E5B9


def _lattice_hash(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice values in [0, 1) from integer coordinates."""
    seed_mix = np.uint64((seed * _MIX1) % (1 << 64))
    h = (ix.astype(np.uint64) * np.uint64(_MIX1)
         ^ iy.astype(np.uint64) * np.uint64(_MIX2)
         ^ seed_mix)
    h ^= h >> np.uint64(29)
    h *= np.uint64(_MIX3)
    h ^= h >> np.uint64(32)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _smooth(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _value_noise(x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
    ix = np.floor(x)
    iy = np.floor(y)
    sx = _smooth(x - ix)
    sy = _smooth(y - iy)
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)
    v00 = _lattice_hash(ix, iy, seed)
    v10 = _lattice_hash(ix + 1, iy, seed)
    v01 = _lattice_hash(ix, iy + 1, seed)
    v11 = _lattice_hash(ix + 1, iy + 1, seed)
    return (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy


def surface_texture(x: np.ndarray, y: np.ndarray, spec: SceneSpec,
                    octaves: int = 4) -> np.ndarray:
    """Multi-octave value noise in [0, 1]; base wavelength sigma / 8."""
    base = spec.surface.sigma / 8.0
    out = np.zeros_like(np.asarray(x, dtype=np.float64))
    total = 0.0
    for k in range(octaves):
        lam = base / (1 << k)
        amp = 1.0 / (1 << k)
        # per-octave lattice offsets decorrelate octave boundaries
        out += amp * _value_noise(x / lam + 13.37 * (k + 1),
                                  y / lam - 7.77 * (k + 1),
                                  spec.texture_seed + 101 * k)
        total += amp
    return out / total


# ---------------------------------------------------------------------------
# rig construction

ROT_RANGE_XY_DEG = 1.0
ROT_RANGE_Z_DEG = 5.0


def build_rig(spec: SceneSpec, fov_h: float, width: int, height: int,
              rot_seed: int | None, back_height_offset: float = 0.0) -> ThreeViewRig:
    """Place the three cameras for a scene.

    The left camera sits at distance ``S / tan(fov/2)`` from the bbox centroid
    (``S`` = bbox diagonal), looking straight at it with identity orientation.
    The right camera is offset by ``C_lr`` along the left x-axis and the back
    camera by ``C_lb`` behind the left one (optionally raised).  Both rig
    distances equal ``S / tan(fov/2) / 150``, so the baseline/depth ratio is
    1/150.  Right and back orientations are perturbed by Euler angles drawn
    uniformly from +-1 deg (x, y) and +-5 deg (z); ``rot_seed=None`` leaves
    them exactly aligned with the left camera.
    """
    if not (np.deg2rad(0.5) < fov_h < np.deg2rad(20.0)):
        raise ValueError("fov must lie in (0.5 deg, 20 deg)")
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    dist = spec.diagonal / np.tan(fov_h / 2.0)
    c_lr = c_lb = dist * BASELINE_DEPTH_RATIO
    left_center = spec.centroid - np.array([0.0, 0.0, dist])

    if rot_seed is None:
        rot_r = rot_b = rotation_from_euler(0.0, 0.0, 0.0)
    else:
        rng = np.random.default_rng(rot_seed)
        def draw():
            ex, ey = np.deg2rad(rng.uniform(-ROT_RANGE_XY_DEG, ROT_RANGE_XY_DEG, 2))
            ez = np.deg2rad(rng.uniform(-ROT_RANGE_Z_DEG, ROT_RANGE_Z_DEG))
            return rotation_from_euler(ez, ey, ex)
        rot_r = draw()
        rot_b = draw()

    left = camera_from_fov(fov_h, width, height, center=left_center)
    right = camera_from_fov(fov_h, width, height, rotation=rot_r,
                            center=left_center + np.array([c_lr, 0.0, 0.0]))
    back = camera_from_fov(fov_h, width, height, rotation=rot_b,
                           center=left_center + np.array([0.0, back_height_offset, -c_lb]))
    return ThreeViewRig(left=left, right=right, back=back, c_lr=c_lr, c_lb=c_lb)


# ---------------------------------------------------------------------------
# rendering

@dataclass
class RenderedView:
    """Grayscale image in [0, 1] plus exact per-pixel depth for one camera."""

    image: np.ndarray
    depth: DepthMap
    camera: Camera

    def __post_init__(self):
        if self.image.shape != self.depth.shape:
            raise ValueError("image and depth dimensions differ")


def render_view(camera: Camera, spec: SceneSpec) -> RenderedView:
    """Raycast the surface heightfield through every pixel of ``camera``.

    Marching starts just below the surface's minimum height and steps the ray
    forward by ``sigma / 50`` in world z until the height function is crossed;
    the bracket is then refined by 40 bisection iterations (intersection error
    well below 1e-4 m).  Pixels whose ray never crosses are invalid.
    """
    surf = spec.surface
    h, w = camera.height, camera.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d_cam = np.stack([(us.ravel() - camera.cx) / camera.f,
                      (vs.ravel() - camera.cy) / camera.f,
                      np.ones(h * w)])
    d_world = camera.rotation.matrix @ d_cam
    if np.any(d_world[2] <= 0):
        raise ValueError("camera must face the surface (all rays toward +z)")
    origin = camera.center

    step = surf.sigma / _MARCH_STEP_DIV
    z_start = surf.a - step
    if origin[2] >= z_start:
        raise ValueError("camera must sit in front of the surface (z below base height)")
    n_steps = int(np.ceil(surf.b / step)) + 2

    # lockstep march: every ray advances by a constant world-z increment
    t = (z_start - origin[2]) / d_world[2]
    dt = step / d_world[2]
    lo = np.full(h * w, np.nan)
    hi = np.full(h * w, np.nan)
    alive = np.ones(h * w, dtype=bool)
    f_prev = None
    t_prev = t.copy()
    for _ in range(n_steps + 1):
        fx = origin[0] + t * d_world[0]
        fy = origin[1] + t * d_world[1]
        fz = origin[2] + t * d_world[2]
        f_val = fz - gaussian_height(fx, fy, surf)
        if f_prev is not None:
            crossed = alive & (f_prev < 0) & (f_val >= 0)
            lo[crossed] = t_prev[crossed]
            hi[crossed] = t[crossed]
            alive &= ~crossed
            if not alive.any():
                break
        f_prev = f_val
        t_prev = t
        t = t + dt

    hit = ~np.isnan(lo)
    tlo, thi = lo[hit], hi[hit]
    dw = d_world[:, hit]
    for _ in range(_BISECTION_ITERS):
        mid = 0.5 * (tlo + thi)
        fmid = (origin[2] + mid * dw[2]) - gaussian_height(origin[0] + mid * dw[0],
                                                           origin[1] + mid * dw[1], surf)
        below = fmid < 0
        tlo = np.where(below, mid, tlo)
        thi = np.where(below, thi, mid)
    t_hit = 0.5 * (tlo + thi)

    depth = np.zeros(h * w)
    depth[hit] = t_hit  # ray direction has camera-frame z = 1, so depth == t
    image = np.zeros(h * w)
    image[hit] = surface_texture(origin[0] + t_hit * dw[0],
                                 origin[1] + t_hit * dw[1], spec)
    return RenderedView(image=image.reshape(h, w),
                        depth=DepthMap(values=depth.reshape(h, w), valid=hit.reshape(h, w)),
                        camera=camera)


# ---------------------------------------------------------------------------
# sparse ground-truth correspondences

def sample_correspondences(spec: SceneSpec, rig: ThreeViewRig, n: int,
                           noise_std: float, seed: int,
                           views: tuple[str, str] = ("left", "right")):
    """Project ``n`` random surface points into a view pair.

    Points are drawn uniformly over the bbox footprint; the second view's
    pixels are perturbed by iid Gaussian noise of per-axis standard deviation
    ``noise_std``; pairs projecting outside either image are dropped.  Returns
    a :class:`~farstereo.features.MatchSet` (with the drop count reported on
    ``dropped``).
    """
    from .features import MatchSet  # local import to avoid a cycle

    if n <= 0:
        raise ValueError("n must be positive")
    cams = {"left": rig.left, "right": rig.right, "back": rig.back}
    cam_a, cam_b = cams[views[0]], cams[views[1]]
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(spec.bbox_min), np.asarray(spec.bbox_max)
    x = rng.uniform(lo[0], hi[0], n)
    y = rng.uniform(lo[1], hi[1], n)
    pts = np.column_stack([x, y, gaussian_height(x, y, spec.surface)])
    uv_a, _ = project_world(pts, cam_a)
    uv_b, _ = project_world(pts, cam_b)
    if noise_std > 0:
        uv_b = uv_b + rng.normal(0.0, noise_std, uv_b.shape)

    def inside(uv, cam):
        return ((uv[:, 0] >= 0) & (uv[:, 0] <= cam.width - 1)
                & (uv[:, 1] >= 0) & (uv[:, 1] <= cam.height - 1))

    keep = inside(uv_a, cam_a) & inside(uv_b, cam_b)
    uv_a, uv_b = uv_a[keep], uv_b[keep]
    # no duplicate first-view keypoints within 0.5 px
    order = np.lexsort((uv_a[:, 1], uv_a[:, 0]))
    dedup = np.ones(len(uv_a), dtype=bool)
    taken = {}
    for i in order:
        key = (round(uv_a[i, 0] * 2), round(uv_a[i, 1] * 2))
        if key in taken:
            dedup[i] = False
        else:
            taken[key] = i
    uv_a, uv_b = uv_a[dedup], uv_b[dedup]
    if len(uv_a) < 8:
        raise TooFewMatchesError(f"only {len(uv_a)} matches survive projection")
    return MatchSet(a=uv_a, b=uv_b, scores=np.ones(len(uv_a)), dropped=int(n - len(uv_a)))


# ---------------------------------------------------------------------------
# scene metadata

def write_scene_metadata(path, spec: SceneSpec, rig: ThreeViewRig) -> None:
    """Key-value text record of the scene and rig (documented schema)."""
    lines = {
        "surface_a": spec.surface.a,
        "surface_b": spec.surface.b,
        "surface_sigma": spec.surface.sigma,
        "texture_seed": spec.texture_seed,
        "bbox_min": " ".join(f"{float(v)!r}" for v in spec.bbox_min),
        "bbox_max": " ".join(f"{float(v)!r}" for v in spec.bbox_max),
        "bbox_diagonal": spec.diagonal,
        "focal_px": rig.left.f,
        "image_width": rig.left.width,
        "image_height": rig.left.height,
        "c_lr": rig.c_lr,
        "c_lb": rig.c_lb,
        "left_center": " ".join(f"{float(v)!r}" for v in rig.left.center),
    }
    with open(path, "w", encoding="ascii") as fh:
        for key, value in lines.items():
            fh.write(f"{key} = {value}\n")
