"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see them).

Criterion 2 has a second clause (best-affine residual <= 0.02 px at 0.1 deg
rotations) that is geometrically unattainable at the stated resolution; it is
implemented faithfully and marked as a strict expected failure.  See
``test_criterion_2b`` for the analysis.
"""

import glob
import os

import numpy as np
import pytest

from farstereo.basrelief import SfmSimConfig, simulate_two_view_sfm
from farstereo.cli import main as cli_main
from farstereo.config import PipelineConfig
from farstereo.disambig import offset_estimate, depth_from_same_depth_pair, remove_ambiguity
from farstereo.features import detect_and_match
from farstereo.geometry import (camera_from_fov, exact_rotation_homography_residual,
                                full_image_grid, project, rotation_from_euler)
from farstereo.metrics import evaluate_depth, warp_depth_to_rectified
from farstereo.pfm import pfm_read, pfm_write
from farstereo.pipeline import run_pipeline
from farstereo.rectify import pseudo_rectify
from farstereo.stereo import oracle_disparity
from farstereo.synthscene import (SurfaceParams, build_rig, make_scene,
                                  render_view, sample_correspondences)

D = np.deg2rad
DESK_FOV = D(6.0)
DESK_W, DESK_H = 1152, 864


def report(criterion: str, ok: bool, detail: str):
    print(f"\n[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {criterion}: {detail}"


# -------------------------------------------------------------------- 1

def test_criterion_1_offset_formula_golden_value():
    q = offset_estimate(m_l=1849.2, m_b=1836.7, d1=49.0, d2=50.5,
                        f=43963.0, c_lr=2.0, c_lb=2.0)
    report("1 offset-formula golden value", abs(q - 249.4) <= 0.1,
           f"q = {q:.3f} px, reference 249.4 +- 0.1")


# -------------------------------------------------------------------- 2

def _desk_camera():
    return camera_from_fov(DESK_FOV, DESK_W, DESK_H)


def test_criterion_2_affine_approximation_bound():
    cam = _desk_camera()
    grid = full_image_grid(cam, 32)
    worst = 0.0
    # corners of the allowed rotation box plus seeded interior samples
    combos = [(sx, sy, sz) for sx in (-1.0, 1.0) for sy in (-1.0, 1.0)
              for sz in (-5.0, 5.0)]
    rng = np.random.default_rng(0)
    combos += [tuple(rng.uniform((-1, -1, -5), (1, 1, 5))) for _ in range(8)]
    for gx, gy, gz in combos:
        rot = rotation_from_euler(D(gz), D(gy), D(gx))
        worst = max(worst, exact_rotation_homography_residual(rot, cam, grid))
    report("2 affine approximation bound", worst <= 2.0,
           f"max best-fit residual {worst:.3f} px over rotation box, bound 2.0")


@pytest.mark.xfail(strict=True, reason=(
    "The 0.02 px target assumes the residual decays quadratically with the "
    "rotation angle, but the dominant non-affine term of the exact warp is "
    "bilinear (u_c * v_c * angle / f), i.e. linear in the angle at fixed FOV; "
    "at 1152x864 / f=10990.7 the geometric floor at 0.1 deg on all axes is "
    "~0.094 px, so no implementation can meet 0.02 px here.  The 2 px bound "
    "above holds with wide margin."))
def test_criterion_2b_residual_at_tenth_degree():
    cam = _desk_camera()
    grid = full_image_grid(cam, 32)
    rot = rotation_from_euler(D(0.1), D(0.1), D(0.1))
    res = exact_rotation_homography_residual(rot, cam, grid)
    report("2b affine residual at 0.1 deg", res <= 0.02,
           f"residual {res:.4f} px, stated bound 0.02 px")


# -------------------------------------------------------------------- 3

@pytest.fixture(scope="module")
def ten_scenes():
    """Ten seeded desk-scale triples (left/right renders + scene + rig)."""
    scenes = []
    for i in range(10):
        spec = make_scene(SurfaceParams(a=4.0, b=3.0, sigma=1.2),
                          texture_seed=200 + i)
        rig = build_rig(spec, DESK_FOV, DESK_W, DESK_H, rot_seed=i)
        left = render_view(rig.left, spec)
        right = render_view(rig.right, spec)
        scenes.append((spec, rig, left, right))
    return scenes


def _held_out_dy(rect, held):
    return np.abs(held.a @ rect.h_l.m[1, :2] + rect.h_l.m[1, 2]
                  - (held.b @ rect.h_r.m[1, :2] + rect.h_r.m[1, 2]))


def test_criterion_3_pseudo_rectification_quality(ten_scenes):
    frac_detected = []
    frac_gt = []
    for i, (spec, rig, left, right) in enumerate(ten_scenes):
        held = sample_correspondences(spec, rig, 1500, 0.0, seed=900 + i)
        # clause 1: detected matches, |dy| <= 2 px for >= 90% of held-out GT
        matches = detect_and_match(left.image, right.image)
        rect, _, _ = pseudo_rectify(left.image, right.image, matches, seed=i)
        frac_detected.append((_held_out_dy(rect, held) <= 2.0).mean())
        # clause 2: noise-free injected GT matches, |dy| < 0.1 px for >= 99%
        gt = sample_correspondences(spec, rig, 1500, 0.0, seed=500 + i)
        rect_gt, _, _ = pseudo_rectify(left.image, right.image, gt, seed=i)
        frac_gt.append((_held_out_dy(rect_gt, held) < 0.1).mean())
    ok = min(frac_detected) >= 0.90 and min(frac_gt) >= 0.99
    report("3 pseudo-rectification quality", ok,
           f"detected-match |dy|<=2px fractions min {min(frac_detected):.3f} "
           f"(need 0.90); noise-free |dy|<0.1px min {min(frac_gt):.3f} (need 0.99)")


# -------------------------------------------------------------------- 4

def test_criterion_4_oracle_end_to_end(desk_scene, desk_rig, rendered_triple,
                                       lr_matches, lb_matches):
    left, right, _ = rendered_triple
    rect, _, _ = pseudo_rectify(left.image, right.image, lr_matches, seed=40)
    gt_rect = warp_depth_to_rectified(left.depth, rect.h_l)
    f, c_lr, c_lb = desk_rig.left.f, desk_rig.c_lr, desk_rig.c_lb
    worst_offset_err = 0.0
    worst_frac = 1.0
    for offset in (-400.0, -250.0, 0.0, 137.5, 400.0):
        disp = oracle_disparity(gt_rect, f, c_lr, synthetic_offset=offset)
        resolved, est = remove_ambiguity(disp, lb_matches, rect.h_l,
                                         f, c_lr, c_lb, seed=41)
        worst_offset_err = max(worst_offset_err,
                               abs(est.accepted_offset - (-offset)))
        from farstereo.disambig import disparity_to_depth
        depth = disparity_to_depth(resolved, f, c_lr)
        rep = evaluate_depth(depth, gt_rect)
        worst_frac = min(worst_frac, rep.fractions[0.01])
    ok = worst_offset_err <= 1.0 and worst_frac >= 0.95
    report("4 oracle end-to-end", ok,
           f"worst offset recovery error {worst_offset_err:.3f} px (need <=1), "
           f"worst <1% depth fraction {worst_frac:.3f} (need >=0.95)")


# -------------------------------------------------------------------- 5

def test_criterion_5_full_pipeline_block_matching(tmp_path):
    surfaces = [SurfaceParams(4.0, 3.0, 1.2), SurfaceParams(5.0, 2.5, 1.0),
                SurfaceParams(4.0, 3.5, 1.4), SurfaceParams(6.0, 3.0, 1.1),
                SurfaceParams(4.5, 2.0, 1.3)]
    fracs = []
    for i, surf in enumerate(surfaces):
        cfg = PipelineConfig(seed=300 + i, surface_a=surf.a, surface_b=surf.b,
                             surface_sigma=surf.sigma)
        result = run_pipeline(cfg, str(tmp_path / f"scene{i}"))
        fracs.append(result.report.fractions[0.03])
    report("5 full pipeline with block matching", min(fracs) >= 0.80,
           f"per-scene <3% fractions {['%.3f' % f for f in fracs]}, need >=0.80 each")


# -------------------------------------------------------------------- 6

def test_criterion_6_bas_relief_signature():
    noisy = simulate_two_view_sfm(SfmSimConfig(runs=20, seed=60)).medians
    clean = simulate_two_view_sfm(SfmSimConfig(runs=20, seed=61, noise_std=0.0)).medians
    ok = (0.02 <= noisy["rot_err_y"] <= 1.0
          and noisy["rot_err_y"] >= 5.0 * noisy["rot_err_x"]
          and noisy["rot_err_y"] >= 5.0 * noisy["rot_err_z"]
          and clean["rot_err_x"] < 1e-3 and clean["rot_err_y"] < 1e-3
          and clean["rot_err_z"] < 1e-3)
    report("6 bas-relief signature", ok,
           f"median |y| {noisy['rot_err_y']:.4f} deg in [0.02, 1.0], "
           f"ratios y/x {noisy['rot_err_y'] / max(noisy['rot_err_x'], 1e-12):.0f}, "
           f"y/z {noisy['rot_err_y'] / max(noisy['rot_err_z'], 1e-12):.0f} (need >=5); "
           f"noise-free max axis {max(clean['rot_err_x'], clean['rot_err_y'], clean['rot_err_z']):.2e} deg")


# -------------------------------------------------------------------- 7

def test_criterion_7_same_depth_pair_numeric():
    f, c_lb = 43963.0, 2.0
    left = camera_from_fov(D(6), 4608, 3456)
    worst = 0.0
    for z in (100.0, 200.0, 300.0, 500.0):
        for dx, y0 in ((1.5, 0.4), (0.8, -1.1)):
            pts = np.array([[dx, y0, z], [-dx, y0, z]])
            uv_l = project(pts, left)
            uv_b = project(pts + np.array([0, 0, c_lb]), left)
            m_l = np.linalg.norm(uv_l[0] - uv_l[1])
            m_b = np.linalg.norm(uv_b[0] - uv_b[1])
            z_hat = depth_from_same_depth_pair(m_l, m_b, c_lb)
            worst = max(worst, abs(z_hat - z) / z)
    report("7 same-depth-pair depth", worst <= 0.002,
           f"worst relative depth error {worst:.2e} over depths 100-500 m (need <=0.2%)")


# -------------------------------------------------------------------- 8

def test_criterion_8_infrastructure(tmp_path):
    # PFM round trip, randomized rasters with the invalid sentinel
    rng = np.random.default_rng(80)
    round_trip_ok = True
    for k in range(20):
        arr = rng.uniform(-1e6, 1e6, (rng.integers(1, 40), rng.integers(1, 40)))
        arr = arr.astype(np.float32)
        mask = rng.uniform(size=arr.shape) < 0.8
        path = tmp_path / f"r{k}.pfm"
        pfm_write(path, arr, valid=mask)
        vals, valid = pfm_read(path)
        round_trip_ok &= np.array_equal(valid, mask)
        round_trip_ok &= np.array_equal(vals[mask].astype(np.float32), arr[mask])

    # fixed-seed pipeline runs are byte-identical across thread counts
    out1, out2 = tmp_path / "t1", tmp_path / "t2"
    args = ["pipeline", "--oracle-stereo", "--seed", "5", "--scale", "0.5"]
    assert cli_main(args + ["--out", str(out1), "--threads", "1"]) == 0
    assert cli_main(args + ["--out", str(out2), "--threads", "8"]) == 0
    identical = True
    for p1 in sorted(glob.glob(str(out1 / "*"))):
        p2 = out2 / os.path.basename(p1)
        identical &= p2.exists() and open(p1, "rb").read() == open(p2, "rb").read()
    report("8 infrastructure", round_trip_ok and identical,
           f"PFM round trips bit-exact: {round_trip_ok}; "
           f"pipeline byte-identical across thread counts: {identical}")
