import math
import unittest

import numpy as np

from rrlbs_unmix.core import RejectedInputError
from rrlbs_unmix.io import SpectralCube
from rrlbs_unmix.sparsity import (
    RAW,
    RESCALED,
    GuidanceMap,
    blank_guidance,
    build_h_matrix,
    gini,
    gini_columns,
    guidance_error,
    guidance_from_abundance,
    guidance_from_factors,
    initial_guidance,
    rescale_half,
    sparsity_penalty,
)


class TestGini(unittest.TestCase):
    def test_one_hot_and_uniform(self) -> None:
        for k in range(2, 11):
            one_hot = np.zeros(k)
            one_hot[k // 2] = 1.0
            self.assertLessEqual(abs(gini(one_hot) - (k - 1) / k), 1e-12)
            self.assertLessEqual(abs(gini(np.full(k, 0.7))), 1e-12)

    def test_hand_value(self) -> None:
        self.assertLessEqual(abs(gini([0.1, 0.3, 0.6]) - 1.0 / 3.0), 1e-12)
        self.assertLessEqual(abs(gini([0.0, 0.0, 1.0]) - 2.0 / 3.0), 1e-12)

    def test_scale_and_permutation_invariance(self) -> None:
        a = np.random.default_rng(0).random(7)
        base = gini(a)
        self.assertLessEqual(abs(gini(3.7 * a) - base), 1e-12)
        self.assertLessEqual(abs(gini(a[::-1]) - base), 1e-12)

    def test_rejects_bad_input(self) -> None:
        with self.assertRaises(RejectedInputError):
            gini([0.0, 0.0])
        with self.assertRaises(RejectedInputError):
            gini([])
        with self.assertRaises(RejectedInputError):
            gini([1.0, -0.5])

    def test_columns_match_scalar(self) -> None:
        a = np.random.default_rng(2).random((4, 6))
        a[:, 3] = 0.0
        values = gini_columns(a)
        for n in range(6):
            expected = 0.0 if n == 3 else gini(a[:, n])
            self.assertAlmostEqual(values[n], expected, places=12)


class TestGuidanceMap(unittest.TestCase):
    def test_rescaled_range_enforced(self) -> None:
        with self.assertRaises(RejectedInputError):
            GuidanceMap(np.array([0.6]), RESCALED)
        GuidanceMap(np.array([4.0]), RAW)

    def test_negative_rejected(self) -> None:
        with self.assertRaises(RejectedInputError):
            GuidanceMap(np.array([-0.1]), RAW)

    def test_values_read_only(self) -> None:
        h = GuidanceMap(np.array([0.1, 0.2]), RESCALED)
        with self.assertRaises(ValueError):
            h.values[0] = 0.3


class TestInitialGuidance(unittest.TestCase):
    def test_constant_cube(self) -> None:
        cube = SpectralCube(channels=3, width=4, height=3, data=np.full((3, 12), 0.4))
        h = initial_guidance(cube, 0.02)
        self.assertEqual(h.state, RAW)
        np.testing.assert_allclose(h.values, 4.0)

    def test_two_pixel_image(self) -> None:
        data = np.array([[0.0, 0.1]])
        cube = SpectralCube(channels=1, width=2, height=1, data=data)
        h = initial_guidance(cube, 0.01)
        np.testing.assert_allclose(h.values, 3.0 + math.exp(-1.0), rtol=1e-12)

    def test_step_boundary_scores_lower(self) -> None:
        grid = np.zeros((4, 4))
        grid[:, 2:] = 1.0
        data = np.vstack([grid.reshape(-1), 0.5 * grid.reshape(-1)])
        h = initial_guidance(SpectralCube(2, 4, 4, data), 0.02).values.reshape(4, 4)
        for row in range(4):
            self.assertLess(h[row, 1], h[row, 0])
            self.assertLess(h[row, 2], h[row, 3])

    def test_sigma_must_be_positive(self) -> None:
        cube = SpectralCube(1, 1, 1, np.ones((1, 1)))
        with self.assertRaises(RejectedInputError):
            initial_guidance(cube, 0.0)


class TestRescale(unittest.TestCase):
    def test_affine_endpoints(self) -> None:
        h = rescale_half(GuidanceMap(np.array([0.2, 0.4, 0.6])))
        self.assertEqual(h.state, RESCALED)
        np.testing.assert_allclose(h.values, [0.0, 0.25, 0.5], atol=1e-15)

    def test_degenerate_map(self) -> None:
        h = rescale_half(GuidanceMap(np.full(5, 3.0)))
        np.testing.assert_array_equal(h.values, np.zeros(5))

    def test_random_range(self) -> None:
        h = rescale_half(GuidanceMap(np.random.default_rng(1).random(50) * 4))
        self.assertEqual(h.values.min(), 0.0)
        self.assertEqual(h.values.max(), 0.5)


class TestGuidanceFromAbundance(unittest.TestCase):
    def test_one_hot_columns(self) -> None:
        a = np.eye(3)[:, [0, 1, 2, 1]]
        np.testing.assert_array_equal(guidance_from_abundance(a).values, np.zeros(4))

    def test_two_endmember_example(self) -> None:
        h = guidance_from_abundance(np.array([[1.0, 0.5], [0.0, 0.5]]))
        np.testing.assert_allclose(h.values, [0.5, 0.0], atol=1e-15)

    def test_permutation_equivariance(self) -> None:
        a = np.random.default_rng(3).random((3, 8))
        order = np.random.default_rng(4).permutation(8)
        np.testing.assert_allclose(
            guidance_from_abundance(a[:, order]).values,
            guidance_from_abundance(a).values[order],
            atol=1e-15,
        )

    def test_needs_two_endmembers(self) -> None:
        with self.assertRaises(RejectedInputError):
            guidance_from_abundance(np.ones((1, 4)))


class TestGuidanceFromFactors(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(11)
        self.m = rng.random((12, 3)) + 0.05
        self.m /= self.m.max(axis=0)
        a = rng.random((3, 20)) ** 3
        self.a = a / a.sum(axis=0)

    def test_undoes_column_scaling(self) -> None:
        d = np.array([4.0, 0.3, 17.0])
        h = guidance_from_factors(self.m * d, self.a / d[:, None])
        np.testing.assert_allclose(
            h.values, guidance_from_abundance(self.a).values, atol=1e-12
        )

    def test_row_normalized_abundance_is_not_enough(self) -> None:
        rows = self.a / self.a.sum(axis=1, keepdims=True)
        scaled_m = self.m * self.a.sum(axis=1)
        expected = guidance_from_abundance(self.a).values
        np.testing.assert_allclose(
            guidance_from_factors(scaled_m, rows).values, expected, atol=1e-12
        )
        self.assertGreater(
            np.abs(guidance_from_abundance(rows).values - expected).max(), 1e-3
        )

    def test_shape_mismatch(self) -> None:
        with self.assertRaises(RejectedInputError):
            guidance_from_factors(self.m, self.a[:2])


class TestHMatrixAndPenalty(unittest.TestCase):
    def test_build_h_matrix(self) -> None:
        h = GuidanceMap(np.array([0.1, 0.2]), RESCALED)
        np.testing.assert_array_equal(build_h_matrix(h, 2), [[0.1, 0.2], [0.1, 0.2]])
        np.testing.assert_array_equal(build_h_matrix(blank_guidance(3), 4), np.zeros((4, 3)))

    def test_raw_map_rejected(self) -> None:
        with self.assertRaises(RejectedInputError):
            build_h_matrix(GuidanceMap(np.array([2.0])), 2)

    def test_penalty_values(self) -> None:
        self.assertAlmostEqual(sparsity_penalty([[1.0]], [[0.0]], 1e-12), 1.0, places=10)
        self.assertAlmostEqual(sparsity_penalty([[4.0]], [[0.5]], 0.0), 2.0, places=14)
        self.assertAlmostEqual(
            sparsity_penalty([[0.04, 0.09]], [[0.5, 0.5]], 0.0), 0.5, places=14
        )

    def test_larger_h_lowers_exponent(self) -> None:
        a = np.array([[0.2, 0.3], [0.4, 0.1]])
        low = np.array([[0.1, 0.1], [0.1, 0.1]])
        high = low.copy()
        high[:, 1] = 0.4
        # entries below 1 grow as the exponent 1 - h shrinks
        self.assertGreater(sparsity_penalty(a, high, 1e-6), sparsity_penalty(a, low, 1e-6))

    def test_h_out_of_range(self) -> None:
        with self.assertRaises(RejectedInputError):
            sparsity_penalty([[1.0]], [[0.7]], 1e-6)


class TestGuidanceError(unittest.TestCase):
    def test_identical_maps(self) -> None:
        h = GuidanceMap(np.array([0.0, 0.2, 0.5]), RESCALED)
        rmse, corr = guidance_error(h, h)
        self.assertEqual(rmse, 0.0)
        self.assertAlmostEqual(corr, 1.0, places=12)

    def test_constant_map_has_zero_correlation(self) -> None:
        h = GuidanceMap(np.array([0.0, 0.2, 0.5]), RESCALED)
        rmse, corr = guidance_error(blank_guidance(3), h)
        self.assertEqual(corr, 0.0)
        self.assertAlmostEqual(rmse, math.sqrt((0.04 + 0.25) / 3), places=12)

    def test_length_mismatch(self) -> None:
        with self.assertRaises(RejectedInputError):
            guidance_error(blank_guidance(2), blank_guidance(3))


if __name__ == "__main__":
    unittest.main()
