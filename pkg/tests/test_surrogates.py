from unittest import TestCase

import numpy as np
import torch

from riskbench.encodings import encode_one_hot
from riskbench.errors import SchemaError, ShapeError, TrainingDivergenceError
from riskbench.surrogates import (GRIDS, SURROGATE_KINDS, PosteriorPrediction, SurrogateSpec, grid_specs, predict,
                                  prepare_encoding, train)
from riskbench.surrogates.base import DROPOUT_NN, ENSEMBLE_NN, GP, RANDOM_FOREST
from riskbench.surrogates.forest import ForestSurrogate
from riskbench.surrogates.layers import FeedForward, TargetScaler, make_generator, sub_seeds
from riskbench.surrogates.neural import EnsembleSurrogate
from tests.fixtures import FAST_SPECS, additive


def toy_data(rows: int = 24, dim: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, dim))
    return X, X @ np.arange(1.0, dim + 1.0) + 0.1 * rng.normal(size=rows)


class TestSpec(TestCase):
    def test_defaults_merged(self):
        spec = SurrogateSpec(DROPOUT_NN)
        self.assertEqual(128, spec["hidden_dim"])
        self.assertEqual(0.1, spec["dropout"])
        self.assertIn(spec["learning_rate"], GRIDS[DROPOUT_NN]["learning_rate"])

    def test_off_grid_value(self):
        with self.assertRaises(SchemaError):
            SurrogateSpec(GP, {"learning_rate": 0.3})

    def test_unknown_key(self):
        with self.assertRaises(SchemaError):
            SurrogateSpec(RANDOM_FOREST, {"min_samples_leaf": 2})

    def test_non_positive_architecture(self):
        with self.assertRaises(SchemaError):
            SurrogateSpec(ENSEMBLE_NN, {"n_estimators": 0})
        with self.assertRaises(SchemaError):
            SurrogateSpec(DROPOUT_NN, {"dropout": 1.0})

    def test_unknown_kind(self):
        with self.assertRaises(SchemaError):
            SurrogateSpec("svm")

    def test_equality_and_hash(self):
        first = SurrogateSpec(GP, {"kernel_type": "rbf"})
        second = SurrogateSpec.from_dict(first.to_dict())
        self.assertEqual(first, second)
        self.assertEqual(hash(first), hash(second))

    def test_grid_sizes(self):
        self.assertEqual(8, len(grid_specs(RANDOM_FOREST)))
        self.assertEqual(14, len(grid_specs(GP)))
        self.assertEqual(14, len(grid_specs("deep_kernel_gp")))
        for kind in ("bnn", DROPOUT_NN, ENSEMBLE_NN):
            self.assertEqual(7, len(grid_specs(kind)))

    def test_grid_overrides(self):
        specs = grid_specs(ENSEMBLE_NN, epochs=2)
        self.assertTrue(all(spec["epochs"] == 2 for spec in specs))


class TestPrediction(TestCase):
    def test_validation(self):
        with self.assertRaises(ShapeError):
            PosteriorPrediction(np.zeros(3), np.zeros(2))
        with self.assertRaises(TrainingDivergenceError):
            PosteriorPrediction(np.zeros(2), np.array([0.0, -1.0]))
        with self.assertRaises(TrainingDivergenceError):
            PosteriorPrediction(np.array([np.nan]), np.zeros(1))
        self.assertEqual(2, len(PosteriorPrediction([1.0, 2.0], [0.0, 0.5])))


class TestEveryKind(TestCase):
    def test_train_predict_contract(self):
        X, y = toy_data()
        queries = X[:7] + 0.05
        for kind in SURROGATE_KINDS:
            with self.subTest(kind=kind):
                model = train(FAST_SPECS[kind], X, y, 5)
                pred = predict(model, queries)
                self.assertEqual(7, len(pred))
                self.assertTrue(np.all(np.isfinite(pred.mean)))
                self.assertTrue(np.all(pred.std >= 0))
                with self.assertRaises(ShapeError):
                    predict(model, np.zeros((2, 3)))
                empty = predict(model, np.zeros((0, X.shape[1])))
                self.assertEqual(0, len(empty))

    def test_deterministic_given_seed(self):
        X, y = toy_data()
        for kind in SURROGATE_KINDS:
            with self.subTest(kind=kind):
                first = train(FAST_SPECS[kind], X, y, 9).predict(X)
                second = train(FAST_SPECS[kind], X, y, 9).predict(X)
                np.testing.assert_allclose(first.mean, second.mean, rtol=1e-12, atol=1e-12)
                np.testing.assert_allclose(first.std, second.std, rtol=1e-12, atol=1e-12)

    def test_std_follows_row_order(self):
        X, y = toy_data()
        queries = X[:9] + 0.1
        order = np.random.default_rng(4).permutation(len(queries))
        for kind in SURROGATE_KINDS:
            with self.subTest(kind=kind):
                model = train(FAST_SPECS[kind], X, y, 2)
                straight = model.predict(queries)
                shuffled = model.predict(queries[order])
                np.testing.assert_allclose(straight.std[order], shuffled.std, rtol=1e-9, atol=1e-12)
                np.testing.assert_allclose(straight.mean[order], shuffled.mean, rtol=1e-9, atol=1e-12)

    def test_mismatched_rows(self):
        X, y = toy_data()
        with self.assertRaises(ShapeError):
            train(FAST_SPECS[GP], X, y[:-1], 0)
        with self.assertRaises(ShapeError):
            train(FAST_SPECS[GP], X[:1], y[:1], 0)


class TestUncertaintyCollapse(TestCase):
    def test_single_dropout_sample_has_no_spread(self):
        X, y = toy_data()
        spec = SurrogateSpec(DROPOUT_NN, {"hidden_dim": 8, "epochs": 2, "batch_size": 8, "mc_samples": 1})
        pred = train(spec, X, y, 0).predict(X)
        np.testing.assert_array_equal(np.zeros(len(X)), pred.std)

    def test_identical_ensemble_members(self):
        X, y = toy_data()
        member = FeedForward([X.shape[1], 4, 4, 1], make_generator(0))
        spec = SurrogateSpec(ENSEMBLE_NN, {"hidden_dim": 4, "n_estimators": 2})
        model = EnsembleSurrogate(spec, [member, member], TargetScaler(y))
        np.testing.assert_array_equal(np.zeros(len(X)), model.predict(X).std)

    def test_bayesian_network_without_weight_noise(self):
        X, y = toy_data()
        spec = SurrogateSpec("bnn", {"hidden_dim": 8, "epochs": 2, "batch_size": 8, "mc_samples": 10})
        model = train(spec, X, y, 0)
        with torch.no_grad():
            for layer in model.network.layers:
                layer.weight_rho.fill_(-60.0)
                layer.bias_rho.fill_(-60.0)
        self.assertLess(float(model.predict(X).std.max()), 1e-10)

    def test_forest_std_is_tree_spread(self):
        X, y = toy_data()
        model = train(FAST_SPECS[RANDOM_FOREST], X, y, 3)
        self.assertIsInstance(model, ForestSurrogate)
        per_tree = model.tree_predictions(X[:5])
        self.assertEqual((10, 5), per_tree.shape)
        np.testing.assert_allclose(per_tree.std(axis=0), model.predict(X[:5]).std)

    def test_ensemble_spread_positive(self):
        X, y = toy_data()
        pred = train(FAST_SPECS[ENSEMBLE_NN], X, y, 1).predict(X)
        self.assertTrue(np.all(pred.std > 0))


class TestHelpers(TestCase):
    def test_target_scaler(self):
        scaler = TargetScaler(np.array([1.0, 3.0]))
        np.testing.assert_allclose([-1.0, 1.0], scaler.transform([1.0, 3.0]))
        np.testing.assert_allclose([2.0], scaler.inverse_mean([0.0]))
        np.testing.assert_allclose([2.0], scaler.inverse_std([2.0]))
        constant = TargetScaler(np.array([4.0, 4.0]))
        self.assertEqual(1.0, constant.scale)

    def test_sub_seeds(self):
        self.assertEqual(sub_seeds(3, 4), sub_seeds(3, 4))
        self.assertEqual(4, len(set(sub_seeds(3, 4))))
        self.assertNotEqual(sub_seeds(3, 2), sub_seeds(4, 2))

    def test_prepare_encoding(self):
        encoding = encode_one_hot(additive())
        rows = list(range(10))
        self.assertIs(encoding, prepare_encoding(RANDOM_FOREST, encoding, rows))
        scaled = prepare_encoding(GP, encoding, rows)
        self.assertFalse(np.array_equal(encoding.vectors, scaled.vectors))
