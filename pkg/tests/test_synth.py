import itertools
import unittest

import numpy as np

from rrlbs_unmix.core import RejectedInputError
from rrlbs_unmix.metrics import sad
from rrlbs_unmix.sparsity import gini_columns
from rrlbs_unmix.synth import (
    MIN_PAIRWISE_SAD,
    SceneSpec,
    assemble_cube,
    gen_abundances,
    gen_endmembers,
    generate_scene,
)


def spec(**kwargs) -> SceneSpec:
    values = dict(width=20, height=20, channels=30, endmembers=3, seed=7)
    values.update(kwargs)
    return SceneSpec(**values)


class TestEndmembers(unittest.TestCase):
    def test_shape_and_range(self) -> None:
        m = gen_endmembers(30, 3, 7)
        self.assertEqual(m.shape, (30, 3))
        self.assertGreaterEqual(m.min(), 0.0)
        self.assertLessEqual(m.max(), 1.0)
        np.testing.assert_array_equal(m.max(axis=0), 1.0)

    def test_deterministic(self) -> None:
        np.testing.assert_array_equal(gen_endmembers(40, 4, 3), gen_endmembers(40, 4, 3))

    def test_pairwise_angles(self) -> None:
        m = gen_endmembers(40, 5, 11)
        for i, j in itertools.combinations(range(5), 2):
            self.assertGreaterEqual(sad(m[:, i], m[:, j]), MIN_PAIRWISE_SAD)

    def test_too_few_channels(self) -> None:
        with self.assertRaises(RejectedInputError):
            gen_endmembers(11, 3, 0)


class TestAbundances(unittest.TestCase):
    def test_columns_sum_to_one(self) -> None:
        a = gen_abundances(spec(blur_radius=2))
        self.assertEqual(a.shape, (3, 400))
        self.assertLessEqual(np.max(np.abs(a.sum(axis=0) - 1.0)), 1e-12)
        self.assertTrue(np.all(a >= 0))

    def test_no_blur_is_one_hot(self) -> None:
        a = gen_abundances(spec(blur_radius=0))
        self.assertTrue(np.all((a == 0.0) | (a == 1.0)))
        np.testing.assert_array_equal(a.sum(axis=0), 1.0)

    def test_blur_mixes_more_pixels(self) -> None:
        threshold = 0.9 * 2.0 / 3.0
        fractions = [
            float(np.mean(gini_columns(gen_abundances(spec(blur_radius=r))) < threshold))
            for r in (0, 1, 2)
        ]
        self.assertLess(fractions[0], fractions[1])
        self.assertLess(fractions[1], fractions[2])


class TestAssemble(unittest.TestCase):
    def test_clean_cube_is_exact_product(self) -> None:
        s = spec()
        m, a = gen_endmembers(30, 3, 7), gen_abundances(s)
        cube, truth = assemble_cube(m, a, s)
        np.testing.assert_array_equal(cube.data, m @ a)
        self.assertEqual(truth.outlier_channels, ())
        self.assertTrue(truth.h_true.is_rescaled)

    def test_blank_outliers(self) -> None:
        s = spec(outlier_fraction=0.2, outlier_kind="blank", noise_sigma=0.01)
        cube, truth = generate_scene(s)
        self.assertEqual(len(truth.outlier_channels), 6)
        for row in truth.outlier_channels:
            np.testing.assert_array_equal(cube.data[row], 0.0)

    def test_heavy_noise_outliers(self) -> None:
        s = spec(outlier_fraction=0.1, outlier_kind="heavy_noise", noise_sigma=0.0)
        cube, truth = generate_scene(s)
        clean = truth.m_true @ truth.a_true
        self.assertEqual(len(truth.outlier_channels), 3)
        for row in truth.outlier_channels:
            self.assertLessEqual(cube.data[row].max(), 3.0 * clean[row].max())
            self.assertFalse(np.array_equal(cube.data[row], clean[row]))

    def test_noise_is_bounded_on_clean_rows(self) -> None:
        s = spec(outlier_fraction=0.2, outlier_kind="blank", noise_sigma=0.01)
        cube, truth = generate_scene(s)
        clean = truth.m_true @ truth.a_true
        rows = [r for r in range(30) if r not in truth.outlier_channels]
        self.assertLessEqual(np.max(np.abs(cube.data[rows] - clean[rows])), 6 * 0.01)
        self.assertGreaterEqual(cube.data.min(), 0.0)

    def test_guidance_truth_range(self) -> None:
        _, truth = generate_scene(spec(blur_radius=2))
        self.assertEqual(truth.h_true.values.min(), 0.0)
        self.assertLessEqual(truth.h_true.values.max(), 0.5)

    def test_deterministic(self) -> None:
        s = spec(noise_sigma=0.02, outlier_fraction=0.2, outlier_kind="heavy_noise", blur_radius=1)
        first_cube, first_truth = generate_scene(s)
        second_cube, second_truth = generate_scene(s)
        np.testing.assert_array_equal(first_cube.data, second_cube.data)
        np.testing.assert_array_equal(first_truth.a_true, second_truth.a_true)
        self.assertEqual(first_truth.outlier_channels, second_truth.outlier_channels)


class TestSceneSpec(unittest.TestCase):
    def test_invalid_scenes(self) -> None:
        for bad in (
            {"endmembers": 0},
            {"channels": 8},
            {"outlier_fraction": 1.0},
            {"outlier_kind": "stripes"},
            {"noise_sigma": -0.1},
            {"blur_radius": -1},
            {"width": 0},
        ):
            with self.subTest(**bad):
                with self.assertRaises(RejectedInputError):
                    spec(**bad).validate()

    def test_outlier_count_rounds_down(self) -> None:
        self.assertEqual(spec(outlier_fraction=0.2).outlier_count, 6)
        self.assertEqual(spec(outlier_fraction=0.25).outlier_count, 7)


if __name__ == "__main__":
    unittest.main()
