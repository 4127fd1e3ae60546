import numpy as np
import pytest

from farstereo.basrelief import (SfmSimConfig, decompose_and_triangulate,
                                 estimate_essential, refine_pose_epipolar,
                                 sampson_distance, simulate_two_view_sfm)
from farstereo.geometry import rotation_from_euler

D = np.deg2rad


def synthetic_two_view(n, r, t, seed=0, depth_range=(5.0, 15.0)):
    """Calibrated correspondences from a known relative pose."""
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n),
                           rng.uniform(*depth_range, n)])
    x1 = pts[:, :2] / pts[:, 2:3]
    q = (r @ pts.T + t[:, None]).T
    x2 = q[:, :2] / q[:, 2:3]
    return pts, x1, x2


class TestEstimateEssential:
    def test_recovers_known_motion(self):
        r = rotation_from_euler(D(3), D(-2), D(1)).matrix
        t = np.array([1.0, 0.3, -0.2])
        _, x1, x2 = synthetic_two_view(60, r, t)
        e = estimate_essential(x1, x2)
        tx = np.array([[0, -t[2], t[1]], [t[2], 0, -t[0]], [-t[1], t[0], 0.0]])
        e_true = tx @ r
        e_true /= np.linalg.norm(e_true)
        e_hat = e / np.linalg.norm(e)
        if np.sum(e_hat * e_true) < 0:
            e_hat = -e_hat
        assert np.linalg.norm(e_hat - e_true) < 1e-8

    def test_epipolar_constraint_satisfied(self):
        r = rotation_from_euler(D(1), D(1), D(-2)).matrix
        t = np.array([0.5, -1.0, 0.1])
        _, x1, x2 = synthetic_two_view(40, r, t, seed=1)
        e = estimate_essential(x1, x2)
        x1h = np.column_stack([x1, np.ones(len(x1))])
        x2h = np.column_stack([x2, np.ones(len(x2))])
        vals = np.einsum("ij,jk,ik->i", x2h, e / np.linalg.norm(e), x1h)
        assert np.abs(vals).max() < 1e-10

    def test_seven_matches_rejected(self):
        r = np.eye(3)
        t = np.array([1.0, 0, 0])
        _, x1, x2 = synthetic_two_view(7, r, t)
        with pytest.raises(ValueError):
            estimate_essential(x1, x2)

    def test_ransac_with_outliers(self):
        r = rotation_from_euler(D(2), D(0.5), D(-1)).matrix
        t = np.array([1.0, 0.1, 0.0])
        _, x1, x2 = synthetic_two_view(200, r, t, seed=2)
        rng = np.random.default_rng(3)
        x2_bad = x2.copy()
        x2_bad[:40] += rng.uniform(0.05, 0.2, (40, 2))  # 20% gross outliers
        e = estimate_essential(x1, x2_bad, ransac=True, seed=4)
        d = sampson_distance(e, x1[40:], x2[40:])
        assert np.sqrt(d).max() < 1e-6


class TestDecomposeAndTriangulate:
    def test_noise_free_recovery(self):
        r = rotation_from_euler(D(2), D(-1), D(0.5)).matrix
        t = np.array([1.0, -0.2, 0.3])
        pts, x1, x2 = synthetic_two_view(80, r, t, seed=5)
        e = estimate_essential(x1, x2)
        r_hat, t_hat, cloud = decompose_and_triangulate(e, x1, x2)
        assert np.abs(r_hat - r).max() < 1e-6
        t_unit = t / np.linalg.norm(t)
        assert np.abs(t_hat - t_unit).max() < 1e-6
        scale = np.linalg.norm(t)
        assert np.sqrt(np.mean(np.sum((cloud * scale - pts) ** 2, axis=1))) < 1e-3

    def test_translation_scale_irrelevant(self):
        r = rotation_from_euler(D(1), D(1), D(1)).matrix
        t = np.array([0.7, 0.1, -0.1])
        _, x1a, x2a = synthetic_two_view(50, r, t, seed=6)
        _, x1b, x2b = synthetic_two_view(50, r, 2 * t, seed=6)
        ea = estimate_essential(x1a, x2a)
        eb = estimate_essential(x1b, x2b)
        ra, ta, _ = decompose_and_triangulate(ea, x1a, x2a)
        rb, tb, _ = decompose_and_triangulate(eb, x1b, x2b)
        assert np.abs(ra - rb).max() < 1e-8
        assert np.abs(ta - tb).max() < 1e-8

    def test_cheirality_selects_front_points(self):
        r = rotation_from_euler(0, 0, 0).matrix
        t = np.array([1.0, 0.0, 0.0])
        _, x1, x2 = synthetic_two_view(60, r, t, seed=7)
        e = estimate_essential(x1, x2)
        r_hat, t_hat, cloud = decompose_and_triangulate(e, x1, x2)
        z2 = (r_hat @ cloud.T + t_hat[:, None])[2]
        assert (cloud[:, 2] > 0).all() and (z2 > 0).all()


class TestRefinement:
    def test_refinement_reduces_epipolar_error(self):
        r = rotation_from_euler(D(1), D(0.5), D(-0.5)).matrix
        t = np.array([1.0, 0.0, 0.05])
        _, x1, x2 = synthetic_two_view(300, r, t, seed=8, depth_range=(50, 80))
        rng = np.random.default_rng(9)
        x2n = x2 + rng.normal(0, 2e-5, x2.shape)
        e = estimate_essential(x1, x2n)
        r0, t0, _ = decompose_and_triangulate(e, x1, x2n)
        r1, t1 = refine_pose_epipolar(r0, t0, x1, x2n)
        def cost(rr, tt):
            tx = np.array([[0, -tt[2], tt[1]], [tt[2], 0, -tt[0]], [-tt[1], tt[0], 0.0]])
            return np.sqrt(sampson_distance(tx @ rr, x1, x2n)).sum()
        assert cost(r1, t1) <= cost(r0, t0) + 1e-12


class TestSimulation:
    def test_noise_free_control(self):
        cfg = SfmSimConfig(runs=3, noise_std=0.0, seed=5)
        rep = simulate_two_view_sfm(cfg)
        assert rep.failures == 0
        med = rep.medians
        assert med["rot_err_x"] < 1e-3
        assert med["rot_err_y"] < 1e-3
        assert med["rot_err_z"] < 1e-3
        assert med["point_rmse"] < 1e-2

    def test_bas_relief_signature(self):
        rep = simulate_two_view_sfm(SfmSimConfig(runs=8, seed=1))
        med = rep.medians
        assert 0.02 <= med["rot_err_y"] <= 1.0
        assert med["rot_err_y"] >= 5.0 * med["rot_err_x"]
        assert med["rot_err_y"] >= 5.0 * med["rot_err_z"]

    def test_rmse_grows_with_noise(self):
        rmses = []
        for noise in (0.0, 0.25, 0.5, 1.0 / np.sqrt(2), 1.0):
            rep = simulate_two_view_sfm(SfmSimConfig(runs=4, noise_std=noise, seed=2))
            rmses.append(rep.medians["point_rmse"])
        # Spearman correlation > 0: ranks strictly increasing is stronger; we
        # check the rank correlation of the sweep
        order = np.argsort(rmses)
        spearman = np.corrcoef(np.arange(5), order)[0, 1]
        assert spearman > 0

    def test_deterministic(self):
        a = simulate_two_view_sfm(SfmSimConfig(runs=2, seed=3))
        b = simulate_two_view_sfm(SfmSimConfig(runs=2, seed=3))
        assert np.array_equal(a.rot_err_y, b.rot_err_y)
        assert np.array_equal(a.point_rmse, b.point_rmse)

    def test_csv_export(self, tmp_path):
        rep = simulate_two_view_sfm(SfmSimConfig(runs=2, seed=4))
        rep.save_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("run,")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SfmSimConfig(n_points=7)
        with pytest.raises(ValueError):
            SfmSimConfig(noise_std=-0.1)
