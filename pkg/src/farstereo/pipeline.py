"""End-to-end depth pipeline: pseudo-rectify, match densely, disambiguate,
convert to depth, and (in synthetic mode) evaluate against ground truth.

Every stage reads and writes documented files inside one artifacts directory
so stages can be re-run in isolation:

    left.png right.png back.png     input / rendered views
    depth_gt.pfm                    ground-truth left depth (synthetic mode)
    scene.txt                       scene + rig metadata (synthetic mode)
    matches_lr.txt matches_lb.txt   sparse matches (text, one per line)
    rectification.txt               the affine pair and consensus stats
    rectified_left.png / _right.png rectified views
    rectified_left_mask.pfm / ...   validity of the warped views
    disparity_raw.pfm               disparity before offset removal
    offset_histogram.txt            cached offset estimates summary
    disparity_resolved.pfm          disparity after offset removal
    depth.pfm                       metric depth for the rectified left view
    relative_error.pfm, error_report.txt   synthetic-mode evaluation
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import disambig, metrics, pngio, rectify, stereo
from .config import PipelineConfig, stage_seed
from .features import MatcherParams, detect_and_match
from .geometry import ThreeViewRig
from .pfm import pfm_read, pfm_write
from .rasters import DepthMap
from .synthscene import (SceneSpec, SurfaceParams, build_rig, make_scene,
                         render_view, write_scene_metadata)


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage label."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _png16(image: np.ndarray) -> np.ndarray:
    """Quantize exactly as a 16-bit PNG write/read round trip would."""
    return np.floor(np.clip(image, 0.0, 1.0) * 65535.0 + 0.5) / 65535.0


def _f32(values: np.ndarray) -> np.ndarray:
    """Quantize exactly as a PFM write/read round trip would."""
    return values.astype(np.float32).astype(np.float64)


@dataclass
class PipelineResult:
    rectification: rectify.AffineRectification
    disparity: stereo.DisparityMap
    depth: DepthMap
    offset: disambig.OffsetEstimateSet
    report: metrics.ErrorReport | None


def _matcher_params(cfg: PipelineConfig) -> MatcherParams:
    return MatcherParams(harris_k=cfg.harris_k, max_keypoints=cfg.max_keypoints,
                         ratio=cfg.match_ratio, min_matches=cfg.min_matches)


def synthetic_scene(cfg: PipelineConfig) -> tuple[SceneSpec, ThreeViewRig]:
    spec = make_scene(SurfaceParams(cfg.surface_a, cfg.surface_b, cfg.surface_sigma),
                      texture_seed=stage_seed(cfg.seed, "texture"),
                      footprint_half=cfg.footprint_half)
    w, h = cfg.scaled_dims()
    rig = build_rig(spec, np.deg2rad(cfg.fov_deg), w, h,
                    rot_seed=stage_seed(cfg.seed, "rig"),
                    back_height_offset=cfg.back_height_offset)
    return spec, rig


def render_stage(cfg: PipelineConfig, out_dir: str) -> tuple[SceneSpec, ThreeViewRig]:
    """Render the three synthetic views plus ground truth into ``out_dir``."""
    spec, rig = synthetic_scene(cfg)
    os.makedirs(out_dir, exist_ok=True)
    for name, cam in (("left", rig.left), ("right", rig.right), ("back", rig.back)):
        view = render_view(cam, spec)
        pngio.write_gray(os.path.join(out_dir, f"{name}.png"), view.image)
        if name == "left":
            pfm_write(os.path.join(out_dir, "depth_gt.pfm"),
                      view.depth.values, view.depth.valid)
    write_scene_metadata(os.path.join(out_dir, "scene.txt"), spec, rig)
    return spec, rig


def _derived_rig_constants(cfg: PipelineConfig, spec: SceneSpec | None):
    if cfg.focal_px is not None and cfg.c_lr is not None and cfg.c_lb is not None:
        return cfg.focal_px, cfg.c_lr, cfg.c_lb
    if spec is None:
        raise StageError("setup", "focal_px, c_lr, c_lb must be configured for file input")
    w, _ = cfg.scaled_dims()
    f = (w / 2.0) / np.tan(np.deg2rad(cfg.fov_deg) / 2.0)
    dist = spec.diagonal / np.tan(np.deg2rad(cfg.fov_deg) / 2.0)
    c = dist / 150.0
    return (cfg.focal_px or f), (cfg.c_lr or c), (cfg.c_lb or c)


def _depth_bounds(cfg: PipelineConfig, spec: SceneSpec | None):
    if cfg.z_min is not None and cfg.z_max is not None:
        return cfg.z_min, cfg.z_max
    if spec is None:
        raise StageError("stereo", "z_min and z_max must be configured for file input")
    dist = spec.diagonal / np.tan(np.deg2rad(cfg.fov_deg) / 2.0)
    return dist - spec.diagonal, dist + spec.diagonal


def run_pipeline(cfg: PipelineConfig, out_dir: str,
                 inputs: tuple[str, str, str] | None = None,
                 oracle_stereo: bool = False) -> PipelineResult:
    """Execute the full pipeline.

    ``inputs`` gives (left, right, back) PNG paths for file mode; when None,
    a synthetic scene is rendered first.  ``oracle_stereo`` replaces block
    matching with exact ground-truth disparity plus a constant offset (test
    mode, synthetic only).
    """
    os.makedirs(out_dir, exist_ok=True)
    spec = rig = None
    if inputs is None:
        try:
            spec, rig = render_stage(cfg, out_dir)
        except Exception as exc:
            raise StageError("render", str(exc)) from exc
        left = pngio.read_gray(os.path.join(out_dir, "left.png"))
        right = pngio.read_gray(os.path.join(out_dir, "right.png"))
        back = pngio.read_gray(os.path.join(out_dir, "back.png"))
        gt_vals, gt_valid = pfm_read(os.path.join(out_dir, "depth_gt.pfm"))
        gt_depth = DepthMap(gt_vals, gt_valid)
    else:
        left_p, right_p, back_p = inputs
        if back_p is None:
            raise StageError("disambiguate", "disambiguation requires back view")
        try:
            left = pngio.read_gray(left_p)
            right = pngio.read_gray(right_p)
            back = pngio.read_gray(back_p)
        except Exception as exc:
            raise StageError("input", str(exc)) from exc
        gt_depth = None
        if oracle_stereo:
            raise StageError("stereo", "oracle stereo requires a synthetic scene")

    f, c_lr, c_lb = _derived_rig_constants(cfg, spec)

    # stage: sparse matching (left-right)
    try:
        lr_matches = detect_and_match(left, right, _matcher_params(cfg))
        lr_matches.save_text(os.path.join(out_dir, "matches_lr.txt"))
    except Exception as exc:
        raise StageError("match", str(exc)) from exc

    # stage: pseudo-rectification
    try:
        params = rectify.RansacParams(m=cfg.ransac_m, trials=cfg.ransac_trials,
                                      epsilon=cfg.epsilon)
        rect, (left_rect, left_ok), (right_rect, right_ok) = rectify.pseudo_rectify(
            left, right, lr_matches, params, phi=cfg.phi,
            seed=stage_seed(cfg.seed, "ransac"),
            min_inlier_ratio=cfg.min_inlier_ratio)
        rect.save_text(os.path.join(out_dir, "rectification.txt"),
                       seed=stage_seed(cfg.seed, "ransac"))
        pngio.write_gray(os.path.join(out_dir, "rectified_left.png"), left_rect)
        pngio.write_gray(os.path.join(out_dir, "rectified_right.png"), right_rect)
        pfm_write(os.path.join(out_dir, "rectified_left_mask.pfm"),
                  left_ok.astype(np.float32))
        pfm_write(os.path.join(out_dir, "rectified_right_mask.pfm"),
                  right_ok.astype(np.float32))
        left_rect = _png16(left_rect)
        right_rect = _png16(right_rect)
    except Exception as exc:
        raise StageError("rectify", str(exc)) from exc

    gt_rect = None
    if gt_depth is not None:
        gt_rect = metrics.warp_depth_to_rectified(gt_depth, rect.h_l)

    # stage: dense disparity
    try:
        if oracle_stereo:
            disp = stereo.oracle_disparity(gt_rect, f, c_lr,
                                           synthetic_offset=cfg.oracle_offset)
        else:
            z_min, z_max = _depth_bounds(cfg, spec)
            search = stereo.default_search_range(cfg.phi, f, c_lr, z_min, z_max,
                                                 left.shape[1], pad=cfg.search_pad)
            disp = stereo.compute_disparity(
                left_rect, right_rect, search,
                stereo.BlockMatchParams(window_radius=cfg.window_radius,
                                        lr_threshold=cfg.lr_threshold),
                left_valid=left_ok, right_valid=right_ok)
        pfm_write(os.path.join(out_dir, "disparity_raw.pfm"), disp.values, disp.valid)
        disp = stereo.DisparityMap(np.where(disp.valid, _f32(disp.values), 0.0),
                                   disp.valid, offset_resolved=False)
    except Exception as exc:
        raise StageError("stereo", str(exc)) from exc

    # stage: offset disambiguation via the back view
    try:
        lb_matches = detect_and_match(left, back, _matcher_params(cfg))
        lb_matches.save_text(os.path.join(out_dir, "matches_lb.txt"))
        dparams = disambig.DisambigParams(delta=cfg.delta, eta=cfg.eta,
                                          target_estimates=cfg.target_estimates,
                                          max_trials_factor=cfg.max_trials_factor,
                                          min_estimates=cfg.min_estimates)
        disp_res, offsets = disambig.remove_ambiguity(
            disp, lb_matches, rect.h_l, f, c_lr, c_lb, dparams,
            seed=stage_seed(cfg.seed, "disambig"))
        offsets.save_histogram(os.path.join(out_dir, "offset_histogram.txt"))
        pfm_write(os.path.join(out_dir, "disparity_resolved.pfm"),
                  disp_res.values, disp_res.valid)
        disp_res = stereo.DisparityMap(np.where(disp_res.valid, _f32(disp_res.values), 0.0),
                                       disp_res.valid, offset_resolved=True)
    except Exception as exc:
        raise StageError("disambiguate", str(exc)) from exc

    # stage: depth conversion
    try:
        depth = disambig.disparity_to_depth(disp_res, f, c_lr)
        pfm_write(os.path.join(out_dir, "depth.pfm"), depth.values, depth.valid)
        depth = DepthMap(np.where(depth.valid, _f32(depth.values), 0.0), depth.valid)
    except Exception as exc:
        raise StageError("depth", str(exc)) from exc

    # stage: evaluation against ground truth (synthetic mode)
    report = None
    if gt_rect is not None:
        try:
            report = metrics.evaluate_depth(depth, gt_rect)
            report.save_text(os.path.join(out_dir, "error_report.txt"))
            err = np.where(report.valid, report.relative_error, 0.0)
            pfm_write(os.path.join(out_dir, "relative_error.pfm"), err, report.valid)
            metrics.save_error_png(os.path.join(out_dir, "relative_error.png"), report)
        except Exception as exc:
            raise StageError("eval", str(exc)) from exc

    return PipelineResult(rectification=rect, disparity=disp_res, depth=depth,
                          offset=offsets, report=report)
