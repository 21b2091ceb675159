import math
from unittest import TestCase

import numpy as np

from riskbench.errors import DegenerateInputError
from riskbench.landscape_analysis import (PROFILE_COLUMNS, classify_quadruple, epistasis, fit_cauchy, kde_peaks,
                                          local_optima, moments, otsu_threshold, profile, reference_sequence,
                                          ruggedness)
from riskbench.landscape_store import Landscape
from tests.fixtures import additive, nk


def bimodal(seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(0.0, 0.1, 900), rng.normal(5.0, 0.1, 100)])


class TestDistribution(TestCase):
    def test_otsu_splits_modes(self):
        threshold, active_pct = otsu_threshold(bimodal())
        self.assertGreater(threshold, 0.5)
        self.assertLess(threshold, 4.5)
        self.assertAlmostEqual(10.0, active_pct)

    def test_otsu_two_values(self):
        threshold, active_pct = otsu_threshold([0.0, 0.0, 1.0, 1.0])
        self.assertGreater(threshold, 0.0)
        self.assertLessEqual(threshold, 1.0)
        self.assertEqual(50.0, active_pct)

    def test_otsu_constant(self):
        with self.assertRaises(DegenerateInputError):
            otsu_threshold([2.0, 2.0, 2.0])

    def test_kde_peaks(self):
        self.assertEqual(2, kde_peaks(bimodal()))
        self.assertEqual(1, kde_peaks(np.random.default_rng(1).normal(size=1000)))
        with self.assertRaises(DegenerateInputError):
            kde_peaks(np.arange(5.0))

    def test_moments(self):
        skewness, excess = moments(np.random.default_rng(2).normal(size=20000))
        self.assertLess(abs(skewness), 0.1)
        self.assertLess(abs(excess), 0.15)
        skewness, _ = moments(bimodal())
        self.assertGreater(skewness, 1.0)
        with self.assertRaises(DegenerateInputError):
            moments([1.0, 1.0, 1.0])

    def test_cauchy_location(self):
        values = 3.0 + 0.5 * np.random.default_rng(3).standard_cauchy(4000)
        fit = fit_cauchy(values)
        self.assertTrue(fit.converged)
        self.assertAlmostEqual(3.0, fit.location, delta=0.1)
        self.assertAlmostEqual(0.5, fit.scale, delta=0.1)

    def test_non_finite(self):
        with self.assertRaises(DegenerateInputError):
            kde_peaks([math.nan] + list(range(20)))


class TestStructure(TestCase):
    def test_additive_landscape(self):
        landscape = additive(length=3, alphabet_size=4, seed=4)
        self.assertEqual(1, local_optima(landscape))
        self.assertLess(ruggedness(landscape), 1e-6)
        self.assertEqual((0.0, 0.0), epistasis(landscape))

    def test_rugged_landscape(self):
        landscape = nk(length=4, alphabet_size=3, k=3, seed=1)
        self.assertGreater(ruggedness(landscape), ruggedness(additive(length=4, alphabet_size=3, seed=1)))
        magnitude, non_magnitude = epistasis(landscape)
        self.assertAlmostEqual(100.0, magnitude + non_magnitude)

    def test_single_site_landscape(self):
        landscape = Landscape("sites", tuple("ACDEFGHIKL"), np.array([3.0, 1, 4, 1, 5, 9, 2, 6, 5, 3]))
        # Every variant neighbors every other, so only the best is an optimum
        self.assertEqual(1, local_optima(landscape))
        with self.assertRaises(DegenerateInputError):
            ruggedness(landscape)

    def test_classify_quadruple(self):
        self.assertIsNone(classify_quadruple(0.0, 1.0, 1.0, 2.0, 0.1))
        self.assertEqual("magnitude", classify_quadruple(0.0, 1.0, 1.0, 3.0, 0.1))
        self.assertEqual("non_magnitude", classify_quadruple(0.0, 1.0, -1.0, -3.0, 0.1))
        self.assertIsNone(classify_quadruple(0.0, 1.0, 1.0, 2.05, 0.1))

    def test_reference_prefers_wild_type(self):
        base = additive(length=2, alphabet_size=3)
        landscape = Landscape("wt", base.sequences, base.raw_fitness, wild_type="DD", alphabet=base.alphabet)
        flags = []
        self.assertEqual("DD", reference_sequence(landscape, flags))
        self.assertEqual([], flags)

    def test_reference_falls_back_to_medoid(self):
        landscape = Landscape("medoid", ("AA", "AC", "CA", "DD"), np.arange(4.0))
        flags = []
        self.assertEqual("AA", reference_sequence(landscape, flags))
        self.assertEqual(["reference:medoid"], flags)


class TestProfile(TestCase):
    def test_full_profile(self):
        result = profile(nk(length=4, alphabet_size=3, k=1, seed=0))
        self.assertEqual(81, result.n)
        self.assertEqual({}, result.errors)
        row = result.to_row()
        self.assertEqual(list(PROFILE_COLUMNS), list(row))
        for column in PROFILE_COLUMNS[1:]:
            self.assertTrue(math.isfinite(row[column]), column)

    def test_degenerate_property_left_nan(self):
        landscape = Landscape("sites", tuple("ACDEFGHIKL"), np.array([3.0, 1, 4, 1, 5, 9, 2, 6, 5, 3]))
        result = profile(landscape)
        self.assertTrue(math.isnan(result.ruggedness))
        self.assertIn("ruggedness", result.errors)
        self.assertEqual(1, result.local_optima)
        self.assertTrue(math.isfinite(result.kde_peaks))
