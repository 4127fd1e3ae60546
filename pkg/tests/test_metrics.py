import numpy as np
import pytest

from farstereo.geometry import AffineTransform
from farstereo.metrics import (aggregate_fractions, evaluate_depth,
                               relative_error_map, threshold_fractions,
                               warp_depth_to_rectified)
from farstereo.rasters import DepthMap


def depth(values, valid=None):
    values = np.asarray(values, dtype=np.float64)
    return DepthMap(values=values,
                    valid=np.ones(values.shape, bool) if valid is None else valid)


class TestWarpDepth:
    def test_identity_is_exact(self):
        rng = np.random.default_rng(0)
        d = depth(rng.uniform(100, 400, (40, 50)))
        out = warp_depth_to_rectified(d, AffineTransform.identity())
        assert np.array_equal(out.values, d.values)
        assert out.valid.all()

    def test_integer_translation_shifts_values(self):
        rng = np.random.default_rng(1)
        d = depth(rng.uniform(100, 400, (30, 40)))
        t = AffineTransform.translation(5, 3)
        out = warp_depth_to_rectified(d, t)
        assert np.array_equal(out.values[3:, 5:], d.values[:-3, :-5])
        assert not out.valid[:3, :].any() and not out.valid[:, :5].any()

    def test_rotation_preserves_value_histogram(self):
        rng = np.random.default_rng(2)
        d = depth(rng.uniform(100, 400, (200, 200)))
        rot = AffineTransform.rotation_about(np.deg2rad(5), (100, 100))
        out = warp_depth_to_rectified(d, rot)
        bins = np.linspace(100, 400, 11)
        h_in, _ = np.histogram(d.values, bins=bins, density=True)
        h_out, _ = np.histogram(out.values[out.valid], bins=bins, density=True)
        assert np.abs(h_in - h_out).max() / h_in.mean() < 0.01

    def test_non_rigid_rejected(self):
        d = depth(np.ones((10, 10)))
        with pytest.raises(ValueError):
            warp_depth_to_rectified(d, AffineTransform(np.array([[2.0, 0, 0],
                                                                 [0, 1.0, 0]])))


class TestRelativeError:
    def test_exact_match_is_zero(self):
        g = depth(np.full((5, 5), 250.0))
        err = relative_error_map(g, g)
        assert np.nanmax(err) == 0.0

    def test_uniform_scaling(self):
        g = depth(np.linspace(100, 400, 25).reshape(5, 5))
        e = depth(1.03 * g.values)
        err = relative_error_map(e, g)
        assert np.allclose(err, 0.03)

    def test_no_overlap_rejected(self):
        a = depth(np.ones((3, 3)), valid=np.zeros((3, 3), bool))
        b = depth(np.ones((3, 3)))
        with pytest.raises(ValueError):
            relative_error_map(a, b)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            relative_error_map(depth(np.ones((3, 3))), depth(np.ones((4, 4))))


class TestThresholdFractions:
    def test_all_zero_error(self):
        err = np.zeros((10, 10))
        fr = threshold_fractions(err)
        assert fr == {0.01: 1.0, 0.02: 1.0, 0.03: 1.0}

    def test_uniform_quarter_percent(self):
        err = np.full((10, 10), 0.025)
        fr = threshold_fractions(err)
        assert fr[0.01] == 0.0 and fr[0.02] == 0.0 and fr[0.03] == 1.0

    def test_strict_comparison(self):
        err = np.full((4, 4), 0.01)
        fr = threshold_fractions(err)
        assert fr[0.01] == 0.0  # exactly at threshold is not below it

    def test_monotone_and_permutation_invariant(self):
        rng = np.random.default_rng(3)
        err = rng.uniform(0, 0.05, (20, 20))
        fr = threshold_fractions(err)
        vals = [fr[k] for k in sorted(fr)]
        assert vals == sorted(vals)
        shuffled = err.ravel().copy()
        rng.shuffle(shuffled)
        fr2 = threshold_fractions(shuffled.reshape(err.shape))
        assert fr == fr2

    def test_invalid_pixels_excluded(self):
        err = np.full((4, 4), np.nan)
        err[0, 0] = 0.0
        fr = threshold_fractions(err)
        assert fr[0.01] == 1.0


def test_evaluate_and_aggregate():
    g = depth(np.full((8, 8), 300.0))
    r1 = evaluate_depth(depth(g.values * 1.005), g)
    r2 = evaluate_depth(depth(g.values * 1.025), g)
    agg = aggregate_fractions([r1, r2])
    assert agg[0.01] == 0.5 and agg[0.02] == 0.5 and agg[0.03] == 1.0
    assert r1.valid_pixel_count == 64


def test_error_colormap():
    from farstereo.metrics import error_to_color

    err = np.array([[0.0, 0.05, np.nan]])
    rgb = error_to_color(err, max_error=0.05)
    assert rgb.shape == (1, 3, 3) and rgb.dtype == np.uint8
    assert rgb[0, 0].tolist() == [0, 0, 0]        # zero error -> black
    assert rgb[0, 1].tolist() == [255, 0, 0]      # saturated error -> red
    assert rgb[0, 2].tolist() == [128, 128, 128]  # invalid -> gray


def test_error_png_export(tmp_path):
    from farstereo.metrics import save_error_png

    g = depth(np.full((6, 6), 300.0))
    rep = evaluate_depth(depth(g.values * 1.01), g)
    save_error_png(tmp_path / "e.png", rep)
    assert (tmp_path / "e.png").exists()
