from unittest import TestCase

import numpy as np

from riskbench.acquisition import (EI, GREEDY, THOMPSON, UCB, AcquisitionSpec, sample_thompson, score, score_ei,
                                   score_ucb, select_batch)
from riskbench.errors import PoolSizeError, PreconditionError, SchemaError
from riskbench.surrogates import PosteriorPrediction


class TestExpectedImprovement(TestCase):
    def test_matches_monte_carlo(self):
        pred = PosteriorPrediction(np.array([0.2, 0.5, 0.9]), np.array([0.3, 0.1, 0.05]))
        exact = score_ei(pred, f_star=0.6, xi=0.01)
        draws = np.random.default_rng(0).standard_normal((400_000, 1)) * pred.std + pred.mean
        estimate = np.maximum(draws - 0.61, 0.0).mean(axis=0)
        np.testing.assert_allclose(estimate, exact, atol=2e-3)

    def test_zero_std_is_plain_improvement(self):
        pred = PosteriorPrediction(np.array([0.3, 0.8, 0.5]), np.zeros(3))
        np.testing.assert_allclose([0.0, 0.3, 0.0], score_ei(pred, f_star=0.5, xi=0.0))

    def test_nonnegative_and_monotone_in_mean(self):
        pred = PosteriorPrediction(np.linspace(-1.0, 1.0, 11), np.full(11, 0.2))
        scores = score_ei(pred, f_star=0.5)
        self.assertTrue(np.all(scores >= 0.0))
        self.assertTrue(np.all(np.diff(scores) > 0.0))

    def test_negative_margin(self):
        with self.assertRaises(PreconditionError):
            score_ei(PosteriorPrediction(np.zeros(1), np.ones(1)), 0.0, xi=-0.1)


class TestOtherRules(TestCase):
    def setUp(self):
        self.pred = PosteriorPrediction(np.array([0.1, 0.4, 0.2]), np.array([0.5, 0.0, 0.2]))

    def test_ucb(self):
        np.testing.assert_allclose([1.1, 0.4, 0.6], score_ucb(self.pred, beta=2.0))
        np.testing.assert_allclose(self.pred.mean, score_ucb(self.pred, beta=0.0))

    def test_greedy_copies_mean(self):
        scores = score(AcquisitionSpec(GREEDY), self.pred, f_star=0.0)
        np.testing.assert_array_equal(self.pred.mean, scores)
        scores[0] = 9.0
        self.assertEqual(0.1, self.pred.mean[0])

    def test_thompson_seeded(self):
        np.testing.assert_array_equal(sample_thompson(self.pred, 4), sample_thompson(self.pred, 4))
        self.assertFalse(np.array_equal(sample_thompson(self.pred, 4), sample_thompson(self.pred, 5)))
        # Zero variance draws return the mean
        self.assertEqual(0.4, sample_thompson(self.pred, 4)[1])

    def test_thompson_draws_average_to_mean(self):
        n_draws = 100_000
        draws = np.stack([sample_thompson(self.pred, seed) for seed in range(n_draws)])
        bound = 3.0 * self.pred.std / np.sqrt(n_draws)
        self.assertTrue(np.all(np.abs(draws.mean(axis=0) - self.pred.mean) <= bound))

    def test_shift_moves_ucb_and_greedy(self):
        shifted = PosteriorPrediction(self.pred.mean + 2.5, self.pred.std)
        for spec in (AcquisitionSpec(UCB, beta=1.0), AcquisitionSpec(GREEDY)):
            with self.subTest(kind=spec.kind):
                base = score(spec, self.pred, 0.0)
                moved = score(spec, shifted, 0.0)
                np.testing.assert_allclose(base + 2.5, moved)
                np.testing.assert_array_equal(select_batch(base, 2, tie_seed=0), select_batch(moved, 2, tie_seed=0))

    def test_dispatch(self):
        np.testing.assert_allclose(score_ucb(self.pred, 1.5), score(AcquisitionSpec(UCB, beta=1.5), self.pred, 0.0))
        np.testing.assert_allclose(score_ei(self.pred, 0.3), score(AcquisitionSpec(EI), self.pred, 0.3))
        spec = AcquisitionSpec(THOMPSON, rng_seed=8)
        np.testing.assert_array_equal(sample_thompson(self.pred, 8), score(spec, self.pred, 0.0))
        np.testing.assert_array_equal(sample_thompson(self.pred, 2), score(spec, self.pred, 0.0, rng_seed=2))


class TestSpec(TestCase):
    def test_round_trip(self):
        spec = AcquisitionSpec(UCB, beta=0.5)
        self.assertEqual(spec, AcquisitionSpec.from_dict(spec.to_dict()))

    def test_invalid(self):
        with self.assertRaises(SchemaError):
            AcquisitionSpec("pi")
        with self.assertRaises(SchemaError):
            AcquisitionSpec(UCB, beta=-1.0)


class TestSelectBatch(TestCase):
    def test_highest_first(self):
        scores = np.array([0.1, 0.9, 0.5, 0.7])
        np.testing.assert_array_equal([1, 3, 2], select_batch(scores, 3, tie_seed=0))

    def test_ties_depend_on_seed_only(self):
        scores = np.zeros(50)
        first = select_batch(scores, 5, tie_seed=1)
        np.testing.assert_array_equal(first, select_batch(scores, 5, tie_seed=1))
        self.assertEqual(5, len(set(first.tolist())))
        picks = {tuple(select_batch(scores, 5, tie_seed=seed)) for seed in range(10)}
        self.assertGreater(len(picks), 1)

    def test_ties_below_strict_winner(self):
        scores = np.array([0.5, 0.5, 1.0, 0.5])
        for seed in range(5):
            batch = select_batch(scores, 2, tie_seed=seed)
            self.assertEqual(2, batch[0])
            self.assertIn(batch[1], (0, 1, 3))

    def test_whole_pool(self):
        self.assertEqual([0], select_batch(np.array([3.0]), 1, tie_seed=0).tolist())

    def test_batch_larger_than_pool(self):
        with self.assertRaises(PoolSizeError):
            select_batch(np.zeros(3), 4, tie_seed=0)

    def test_non_positive_batch(self):
        with self.assertRaises(PreconditionError):
            select_batch(np.zeros(3), 0, tie_seed=0)
