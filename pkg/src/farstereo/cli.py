"""Command-line driver.

Subcommands operate on one artifacts directory (``--out``) with documented
file names so stages can be re-run in isolation.  Exit codes: 0 success,
1 usage error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import disambig, metrics, pngio, rectify, stereo
from .basrelief import SfmSimConfig, simulate_two_view_sfm
from .config import PipelineConfig, load_config, save_config, stage_seed
from .features import detect_and_match
from .geometry import AffineTransform
from .pfm import pfm_read, pfm_write
from .pipeline import StageError, render_stage, run_pipeline
from .rasters import DepthMap


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--scale", type=float, help="resolution scale (overrides config)")
    p.add_argument("--threads", type=int, default=1,
                   help="reserved; results never depend on it")
    p.add_argument("--out", required=True, help="artifacts directory")


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return cfg.with_overrides(seed=args.seed, scale=args.scale)


def _read_rectification(out_dir: str) -> rectify.AffineRectification:
    rows = {}
    with open(os.path.join(out_dir, "rectification.txt"), "r", encoding="ascii") as fh:
        for line in fh:
            key, _, raw = line.partition("=")
            rows[key.strip()] = raw.strip()
    def mat(name):
        return np.array([[float(v) for v in rows[f"{name}_row{r}"].split()] for r in (0, 1)])
    return rectify.AffineRectification(
        h_l=AffineTransform(mat("h_l")), h_r=AffineTransform(mat("h_r")),
        inlier_count=int(rows["inlier_count"]), inlier_ratio=float(rows["inlier_ratio"]))


def main(argv=None) -> int:
    parser = _Parser(prog="farstereo",
                     description="Three-camera long-range depth estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, desc in (
            ("render", "render a synthetic three-view scene with ground truth"),
            ("rectify", "match and pseudo-rectify the left/right pair"),
            ("disparity", "dense block-matching disparity on the rectified pair"),
            ("disambiguate", "resolve the disparity offset using the back view"),
            ("depth", "convert resolved disparity to metric depth"),
            ("pipeline", "run every stage end to end"),
            ("simulate-basrelief", "two-view SfM bas-relief simulation"),
            ("eval", "compare estimated depth to ground truth")):
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        if name == "pipeline":
            p.add_argument("--left")
            p.add_argument("--right")
            p.add_argument("--back")
            p.add_argument("--oracle-stereo", action="store_true")
        if name == "disparity":
            p.add_argument("--oracle-stereo", action="store_true")
        if name == "simulate-basrelief":
            p.add_argument("--runs", type=int, default=20)
            p.add_argument("--noise-std", type=float, default=None)
        if name == "eval":
            p.add_argument("--probe", nargs=2, type=float, metavar=("U", "V"),
                           help="print estimated depth at pixel (u, v)")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return 1
    try:
        cfg = _load_cfg(args)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1

    out = args.out
    os.makedirs(out, exist_ok=True)
    try:
        return _dispatch(args, cfg, out)
    except StageError as exc:
        sys.stderr.write(f"stage failure {exc}\n")
        return 2
    except Exception as exc:  # stage-labeled wrapper for direct subcommands
        sys.stderr.write(f"stage failure [{args.command}] {exc}\n")
        return 2


def _dispatch(args, cfg: PipelineConfig, out: str) -> int:
    if args.command == "render":
        render_stage(cfg, out)
        save_config(cfg, os.path.join(out, "config.txt"))
        print(f"rendered synthetic scene into {out}")
        return 0

    if args.command == "rectify":
        from .pipeline import _matcher_params
        left = pngio.read_gray(os.path.join(out, "left.png"))
        right = pngio.read_gray(os.path.join(out, "right.png"))
        matches = detect_and_match(left, right, _matcher_params(cfg))
        matches.save_text(os.path.join(out, "matches_lr.txt"))
        params = rectify.RansacParams(m=cfg.ransac_m, trials=cfg.ransac_trials,
                                      epsilon=cfg.epsilon)
        rect, (lr_img, lr_ok), (rr_img, rr_ok) = rectify.pseudo_rectify(
            left, right, matches, params, phi=cfg.phi,
            seed=stage_seed(cfg.seed, "ransac"), min_inlier_ratio=cfg.min_inlier_ratio)
        rect.save_text(os.path.join(out, "rectification.txt"),
                       seed=stage_seed(cfg.seed, "ransac"))
        pngio.write_gray(os.path.join(out, "rectified_left.png"), lr_img)
        pngio.write_gray(os.path.join(out, "rectified_right.png"), rr_img)
        pfm_write(os.path.join(out, "rectified_left_mask.pfm"), lr_ok.astype(np.float32))
        pfm_write(os.path.join(out, "rectified_right_mask.pfm"), rr_ok.astype(np.float32))
        print(f"rectified with {rect.inlier_count} inliers "
              f"(ratio {rect.inlier_ratio:.3f})")
        return 0

    if args.command == "pipeline":
        inputs = None
        if args.left or args.right or args.back:
            inputs = (args.left, args.right, args.back)
        result = run_pipeline(cfg, out, inputs=inputs,
                              oracle_stereo=args.oracle_stereo)
        save_config(cfg, os.path.join(out, "config.txt"))
        msg = (f"pipeline done: offset {result.offset.accepted_offset:.2f} px, "
               f"{result.depth.valid.sum()} valid depth pixels")
        if result.report is not None:
            fr = result.report.fractions
            msg += "".join(f", <{int(t*100)}%: {fr[t]:.3f}" for t in sorted(fr))
        print(msg)
        return 0

    if args.command == "simulate-basrelief":
        sim = SfmSimConfig(runs=args.runs, seed=cfg.seed,
                           **({} if args.noise_std is None else {"noise_std": args.noise_std}))
        report = simulate_two_view_sfm(sim)
        report.save_csv(os.path.join(out, "basrelief_runs.csv"))
        report.save_text(os.path.join(out, "basrelief_medians.txt"))
        med = report.medians
        print("median rotation errors (deg): "
              f"x={med['rot_err_x']:.5f} y={med['rot_err_y']:.5f} z={med['rot_err_z']:.5f}; "
              f"point RMSE {med['point_rmse']:.2f} m over {args.runs} runs")
        return 0

    # remaining stages need the rectification and rig constants on disk
    if args.command == "disparity":
        from .pipeline import _depth_bounds, _derived_rig_constants, synthetic_scene
        spec, _ = synthetic_scene(cfg)
        f, c_lr, _ = _derived_rig_constants(cfg, spec)
        rect = _read_rectification(out)
        if args.oracle_stereo:
            gt_vals, gt_valid = pfm_read(os.path.join(out, "depth_gt.pfm"))
            gt_rect = metrics.warp_depth_to_rectified(DepthMap(gt_vals, gt_valid), rect.h_l)
            disp = stereo.oracle_disparity(gt_rect, f, c_lr, cfg.oracle_offset)
        else:
            lmask, _ = pfm_read(os.path.join(out, "rectified_left_mask.pfm"))
            rmask, _ = pfm_read(os.path.join(out, "rectified_right_mask.pfm"))
            left_rect = pngio.read_gray(os.path.join(out, "rectified_left.png"))
            right_rect = pngio.read_gray(os.path.join(out, "rectified_right.png"))
            z_min, z_max = _depth_bounds(cfg, spec)
            search = stereo.default_search_range(cfg.phi, f, c_lr, z_min, z_max,
                                                 left_rect.shape[1], pad=cfg.search_pad)
            disp = stereo.compute_disparity(
                left_rect, right_rect, search,
                stereo.BlockMatchParams(window_radius=cfg.window_radius,
                                        lr_threshold=cfg.lr_threshold),
                left_valid=lmask > 0.5, right_valid=rmask > 0.5)
        pfm_write(os.path.join(out, "disparity_raw.pfm"), disp.values, disp.valid)
        print(f"disparity: {int(disp.valid.sum())} valid pixels")
        return 0

    if args.command == "disambiguate":
        from .pipeline import _derived_rig_constants, _matcher_params, synthetic_scene
        spec, _ = synthetic_scene(cfg)
        f, c_lr, c_lb = _derived_rig_constants(cfg, spec)
        rect = _read_rectification(out)
        left = pngio.read_gray(os.path.join(out, "left.png"))
        back = pngio.read_gray(os.path.join(out, "back.png"))
        vals, valid = pfm_read(os.path.join(out, "disparity_raw.pfm"))
        disp = stereo.DisparityMap(vals, valid, offset_resolved=False)
        lb = detect_and_match(left, back, _matcher_params(cfg))
        lb.save_text(os.path.join(out, "matches_lb.txt"))
        dparams = disambig.DisambigParams(delta=cfg.delta, eta=cfg.eta,
                                          target_estimates=cfg.target_estimates,
                                          max_trials_factor=cfg.max_trials_factor,
                                          min_estimates=cfg.min_estimates)
        disp_res, offsets = disambig.remove_ambiguity(
            disp, lb, rect.h_l, f, c_lr, c_lb, dparams,
            seed=stage_seed(cfg.seed, "disambig"))
        offsets.save_histogram(os.path.join(out, "offset_histogram.txt"))
        pfm_write(os.path.join(out, "disparity_resolved.pfm"),
                  disp_res.values, disp_res.valid)
        print(f"offset {offsets.accepted_offset:.2f} px from "
              f"{len(offsets.estimates)} estimates")
        return 0

    if args.command == "depth":
        from .pipeline import _derived_rig_constants, synthetic_scene
        spec, _ = synthetic_scene(cfg)
        f, c_lr, _ = _derived_rig_constants(cfg, spec)
        vals, valid = pfm_read(os.path.join(out, "disparity_resolved.pfm"))
        disp = stereo.DisparityMap(vals, valid, offset_resolved=True)
        depth = disambig.disparity_to_depth(disp, f, c_lr)
        pfm_write(os.path.join(out, "depth.pfm"), depth.values, depth.valid)
        print(f"depth: {int(depth.valid.sum())} valid pixels")
        return 0

    if args.command == "eval":
        rect = _read_rectification(out)
        gt_vals, gt_valid = pfm_read(os.path.join(out, "depth_gt.pfm"))
        gt_rect = metrics.warp_depth_to_rectified(DepthMap(gt_vals, gt_valid), rect.h_l)
        vals, valid = pfm_read(os.path.join(out, "depth.pfm"))
        est = DepthMap(vals, valid)
        report = metrics.evaluate_depth(est, gt_rect)
        report.save_text(os.path.join(out, "error_report.txt"))
        err = np.where(report.valid, report.relative_error, 0.0)
        pfm_write(os.path.join(out, "relative_error.pfm"), err, report.valid)
        metrics.save_error_png(os.path.join(out, "relative_error.png"), report)
        fr = report.fractions
        print("fractions " + " ".join(f"<{int(t*100)}%: {fr[t]:.4f}" for t in sorted(fr)))
        if args.probe is not None:
            u, v = int(round(args.probe[0])), int(round(args.probe[1]))
            if 0 <= v < est.shape[0] and 0 <= u < est.shape[1] and est.valid[v, u]:
                print(f"depth at ({u}, {v}): {est.values[v, u]:.2f} m")
            else:
                print(f"depth at ({u}, {v}): invalid")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
