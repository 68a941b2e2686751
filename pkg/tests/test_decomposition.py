"""Depth decomposition algebra: hand-computed fixtures plus invariants."""

import math

import numpy as np
import pytest

from depthdecomp import (
    INVERTED,
    ORIGINAL,
    GradientPair,
    MetricDepthMap,
    NormalizedDepthMap,
    ScaleStats,
    invert_depth,
    least_squares_scale_shift,
    reconstruct_direct,
    spatial_gradients,
    uninvert_depth,
    znormalize,
)
from depthdecomp.errors import (
    DegenerateFitError,
    DegenerateMapError,
    NegativeDepthError,
    OutOfRangeError,
    ShapeMismatchError,
    SpaceMismatchError,
    TooSmallError,
)


def original(data, mask=None):
    return MetricDepthMap(np.asarray(data, dtype=float), ORIGINAL, mask)


def inverted(data, mask=None):
    return MetricDepthMap(np.asarray(data, dtype=float), INVERTED, mask)


class TestInvertDepth:
    @pytest.mark.parametrize("m_o,m", [(0.0, 1.0), (1.0, 0.5), (9.0, 0.1)])
    def test_scalar_values(self, m_o, m):
        out = invert_depth(original([[m_o, m_o]]))
        assert out.space == INVERTED
        np.testing.assert_allclose(out.data, m)

    def test_negative_depth_rejected(self):
        with pytest.raises(NegativeDepthError):
            invert_depth(original([[1.0, -0.1]]))

    def test_negative_at_invalid_pixel_ignored(self):
        mask = np.array([[True, False]])
        out = invert_depth(original([[1.0, -5.0]], mask))
        assert out.data[0, 0] == 0.5
        assert out.data[0, 1] == 0.0  # invalid pixels carry 0

    def test_wrong_space_rejected(self):
        with pytest.raises(SpaceMismatchError):
            invert_depth(inverted([[0.5, 0.5]]))

    def test_strictly_decreasing(self, rng):
        # inversion reverses the order of every pixel pair
        d = rng.uniform(0.0, 100.0, size=(9, 7))
        out = invert_depth(original(d)).data
        a, b = d.ravel()[:, None], d.ravel()[None, :]
        ia, ib = out.ravel()[:, None], out.ravel()[None, :]
        np.testing.assert_array_equal(np.sign(a - b), -np.sign(ia - ib))


class TestUninvertDepth:
    @pytest.mark.parametrize("m,m_o", [(1.0, 0.0), (0.5, 1.0)])
    def test_scalar_values(self, m, m_o):
        out = uninvert_depth(inverted([[m, m]]))
        assert out.space == ORIGINAL
        np.testing.assert_allclose(out.data, m_o)

    @pytest.mark.parametrize("bad", [0.0, -0.5, 1.5])
    def test_out_of_range_rejected(self, bad):
        with pytest.raises(OutOfRangeError):
            uninvert_depth(inverted([[0.5, bad]]))

    def test_round_trip_random_map(self, rng):
        d = rng.uniform(0.5, 10.0, size=(20, 30))
        back = uninvert_depth(invert_depth(original(d)))
        np.testing.assert_allclose(back.data, d, rtol=1e-9)

    def test_bijectivity_full_range(self, rng):
        d = rng.uniform(0.0, 100.0, size=(16, 16))
        back = uninvert_depth(invert_depth(original(d)))
        np.testing.assert_allclose(back.data, d, rtol=1e-9, atol=1e-9)


class TestZnormalize:
    def test_two_by_two_fixture(self):
        # mu = 2.5, sigma = sqrt(5/4) by direct scalar evaluation
        n, stats = znormalize(original([[1.0, 2.0], [3.0, 4.0]]))
        sigma = math.sqrt(1.25)
        assert stats.mean == pytest.approx(2.5)
        assert stats.std == pytest.approx(sigma)
        expected = (np.array([[1.0, 2.0], [3.0, 4.0]]) - 2.5) / sigma
        np.testing.assert_allclose(n.data, expected, atol=1e-12)
        np.testing.assert_allclose(
            n.data, [[-1.34164, -0.44721], [0.44721, 1.34164]], atol=1e-5
        )

    def test_population_std_gives_unit_variance(self, rng):
        d = rng.uniform(1.0, 5.0, size=(12, 9))
        n, _ = znormalize(original(d))
        assert n.data.mean() == pytest.approx(0.0, abs=1e-5)
        assert n.data.std() == pytest.approx(1.0, abs=1e-5)

    def test_constant_map_rejected(self):
        with pytest.raises(DegenerateMapError):
            znormalize(original(np.full((4, 4), 3.0)))

    def test_single_valid_pixel_rejected(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[1, 1] = True
        with pytest.raises(DegenerateMapError):
            znormalize(original(np.ones((3, 3)), mask))

    def test_affine_invariance(self, rng):
        d = rng.uniform(0.5, 8.0, size=(10, 10))
        base, _ = znormalize(original(d))
        for a, b in [(2.0, 0.0), (0.3, 5.0), (17.0, -2.0)]:
            shifted, _ = znormalize(original(a * d + b))
            np.testing.assert_allclose(shifted.data, base.data, atol=1e-9)

    def test_invalid_pixels_zeroed_and_ignored(self):
        mask = np.array([[True, True], [True, False]])
        n, stats = znormalize(original([[1.0, 2.0], [3.0, 99.0]], mask))
        assert n.data[1, 1] == 0.0
        assert stats.mean == pytest.approx(2.0)
        assert not n.valid_mask[1, 1]


class TestReconstructDirect:
    def test_zero_map_gives_constant_mean(self):
        n = NormalizedDepthMap(np.zeros((3, 3)))
        out = reconstruct_direct(n, ScaleStats(mean=5.0, std=2.0))
        np.testing.assert_allclose(out.data, 5.0)

    def test_scalar_fixture(self):
        n = NormalizedDepthMap(np.array([[-1.0, 1.0]]))
        out = reconstruct_direct(n, ScaleStats(mean=3.0, std=0.5))
        np.testing.assert_allclose(out.data, [[2.5, 3.5]])

    def test_round_trip_fixture(self):
        d = original([[1.0, 2.0], [3.0, 4.0]])
        n, stats = znormalize(d)
        np.testing.assert_allclose(
            reconstruct_direct(n, stats).data, d.data, atol=1e-6
        )

    def test_round_trip_property(self, rng):
        for _ in range(50):
            d = rng.uniform(0.1, 50.0, size=(8, 6))
            n, stats = znormalize(original(d))
            np.testing.assert_allclose(
                reconstruct_direct(n, stats).data, d, atol=1e-6
            )

    def test_nonpositive_std_rejected(self):
        n = NormalizedDepthMap(np.zeros((2, 2)))
        with pytest.raises(DegenerateMapError):
            reconstruct_direct(n, ScaleStats(mean=1.0, std=0.0))


class TestSpatialGradients:
    def test_constant_map_zero_gradients(self):
        g = spatial_gradients(np.full((4, 5), 2.0))
        np.testing.assert_array_equal(g.gx, 0.0)
        np.testing.assert_array_equal(g.gy, 0.0)

    def test_horizontal_ramp(self):
        d = np.tile(np.arange(5.0), (4, 1))
        g = spatial_gradients(d)
        np.testing.assert_array_equal(g.gx[:, :-1], 1.0)
        np.testing.assert_array_equal(g.gx[:, -1], 0.0)
        np.testing.assert_array_equal(g.gy, 0.0)

    def test_pairwise_fixture(self):
        g = spatial_gradients(np.array([[0.0, 2.0], [1.0, 5.0]]))
        np.testing.assert_array_equal(g.gx, [[2.0, 0.0], [4.0, 0.0]])
        np.testing.assert_array_equal(g.gy, [[1.0, 3.0], [0.0, 0.0]])

    def test_entries_with_invalid_contributor_are_zero(self):
        mask = np.array([[True, False, True], [True, True, True]])
        d = np.arange(6.0).reshape(2, 3)
        g = spatial_gradients(d, mask)
        assert g.gx[0, 0] == 0.0  # right neighbor invalid
        assert g.gx[0, 1] == 0.0  # source pixel invalid
        assert g.gy[0, 1] == 0.0
        assert g.gx[1, 0] == 1.0
        assert g.gy[0, 0] == 3.0

    def test_valid_mask_requires_both_directions(self):
        g = spatial_gradients(np.ones((3, 3)))
        expected = np.zeros((3, 3), dtype=bool)
        expected[:2, :2] = True
        np.testing.assert_array_equal(g.valid_mask, expected)

    def test_too_small_rejected(self):
        with pytest.raises(TooSmallError):
            spatial_gradients(np.ones((1, 5)))

    def test_linearity_under_normalization(self, rng):
        d = rng.uniform(0.5, 4.0, size=(7, 8))
        n, stats = znormalize(original(d))
        g_raw = spatial_gradients(d)
        g_norm = spatial_gradients(n.data, n.valid_mask)
        np.testing.assert_allclose(g_norm.gx, g_raw.gx / stats.std, atol=1e-9)
        np.testing.assert_allclose(g_norm.gy, g_raw.gy / stats.std, atol=1e-9)

    def test_shape_mismatch_in_pair(self):
        with pytest.raises(ShapeMismatchError):
            GradientPair(np.zeros((2, 2)), np.zeros((3, 2)))


class TestLeastSquaresScaleShift:
    def test_recovers_normalization_stats(self, rng):
        d = rng.uniform(1.0, 9.0, size=(6, 6))
        n, stats = znormalize(original(d))
        fit = least_squares_scale_shift(n.data, d, n.valid_mask)
        assert fit.std == pytest.approx(stats.std, rel=1e-12)
        assert fit.mean == pytest.approx(stats.mean, rel=1e-12)

    def test_hand_solved_normal_equations(self):
        # n = [0, 1, 2], m = [3, 5, 7]: cov = 4/3, var = 2/3 -> scale 2, shift 3
        fit = least_squares_scale_shift(
            np.array([[0.0, 1.0, 2.0]]), np.array([[3.0, 5.0, 7.0]])
        )
        assert fit.std == pytest.approx(2.0)
        assert fit.mean == pytest.approx(3.0)

    def test_constant_prediction_rejected(self):
        with pytest.raises(DegenerateFitError):
            least_squares_scale_shift(np.ones((2, 3)), np.arange(6.0).reshape(2, 3))

    def test_residual_beats_random_perturbations(self, rng):
        n_hat = rng.normal(size=(10, 10))
        m = 2.0 * n_hat + 1.0 + rng.normal(scale=0.3, size=(10, 10))
        fit = least_squares_scale_shift(n_hat, m)

        def residual(scale, shift):
            return float(((scale * n_hat + shift - m) ** 2).sum())

        best = residual(fit.std, fit.mean)
        for _ in range(1000):
            ds, dm = rng.normal(scale=0.1, size=2)
            assert best <= residual(fit.std + ds, fit.mean + dm) + 1e-12
