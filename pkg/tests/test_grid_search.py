import importlib
import json
import os
import shutil
import tempfile
from unittest import TestCase, mock

from riskbench.encodings import encode_one_hot
from riskbench.errors import PreconditionError, SchemaError, SearchFailureError
from riskbench.landscape_store import SplitPlan, make_split
from riskbench.surrogates import GridSearchCache, SurrogateSpec, grid_search, train
from riskbench.surrogates.base import GP, RANDOM_FOREST
from tests.fixtures import FAST_SPECS, additive

# The package re-exports the grid_search function, shadowing the submodule name for mock.patch
_grid_search_module = importlib.import_module("riskbench.surrogates.grid_search")


class TestCache(TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.path = os.path.join(self.directory, "nested", "grid.json")

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_persists_winners(self):
        cache = GridSearchCache(self.path)
        spec = SurrogateSpec(GP, {"kernel_type": "matern", "learning_rate": 0.01})
        cache.put("abc", "one_hot", spec, 0.25)
        self.assertTrue(os.path.exists(self.path))

        reopened = GridSearchCache(self.path)
        self.assertEqual(1, len(reopened))
        self.assertIn(("abc", "one_hot", GP), reopened)
        self.assertEqual(spec, reopened.get("abc", "one_hot", GP))
        self.assertEqual(0.25, reopened.rmse("abc", "one_hot", GP))
        self.assertIsNone(reopened.get("abc", "esm", GP))

    def test_in_memory(self):
        cache = GridSearchCache()
        cache.put("abc", "one_hot", FAST_SPECS[RANDOM_FOREST], None)
        self.assertEqual(1, len(cache))
        self.assertFalse(os.listdir(self.directory))

    def test_unreadable_file(self):
        with open(self.path.replace("nested" + os.sep, ""), "w", encoding="utf-8") as handle:
            json.dump({"rows": []}, handle)
        with self.assertRaises(SchemaError):
            GridSearchCache(self.path.replace("nested" + os.sep, ""))


class TestSearch(TestCase):
    def setUp(self):
        self.landscape = additive()
        self.split = make_split(self.landscape, 0)
        self.encoding = encode_one_hot(self.landscape)

    def test_single_point_grid_skips_scoring(self):
        cache = GridSearchCache()
        spec = FAST_SPECS[GP]
        winner = grid_search(GP, self.landscape, self.split, self.encoding, cache=cache, grid=[spec])
        self.assertEqual(spec, winner)
        self.assertIsNone(cache.rmse(self.landscape.digest(), self.encoding.name, GP))

    def test_winner_is_cached_and_reused(self):
        cache = GridSearchCache()
        grid = [SurrogateSpec(GP, {"kernel_type": kernel, "learning_rate": 0.1, "gp_iterations": 10})
                for kernel in ("rbf", "matern")]
        winner = grid_search(GP, self.landscape, self.split, self.encoding, cache=cache, grid=grid)
        self.assertIn(winner, grid)
        rmse = cache.rmse(self.landscape.digest(), self.encoding.name, GP)
        self.assertGreaterEqual(rmse, 0.0)
        # A cache hit never looks at the grid
        self.assertEqual(winner, grid_search(GP, self.landscape, self.split, self.encoding, cache=cache, grid=[]))

    def test_ties_keep_enumeration_order(self):
        # With nine training rows a depth limit of ten changes nothing
        grid = [SurrogateSpec(RANDOM_FOREST, {"n_estimators": 10, "max_depth": depth}) for depth in (None, 10)]
        winner = grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, grid=grid)
        self.assertEqual(grid[0], winner)

    def test_deterministic(self):
        grid = [SurrogateSpec(RANDOM_FOREST, {"n_estimators": count}) for count in (10, 50)]
        first = grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, grid=grid, rng_seed=3)
        second = grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, grid=grid, rng_seed=3)
        self.assertEqual(first, second)

    def test_empty_grid(self):
        with self.assertRaises(PreconditionError):
            grid_search(GP, self.landscape, self.split, self.encoding, grid=[])

    def test_empty_test_rows(self):
        split = SplitPlan(self.split.hyperparam_train, self.split.hyperparam_test[:0], self.split.campaign_pool,
                          self.split.split_seed)
        with self.assertRaises(PreconditionError):
            grid_search(GP, self.landscape, split, self.encoding, grid=[FAST_SPECS[GP]])

    def test_parallel_matches_serial(self):
        grid = [SurrogateSpec(RANDOM_FOREST, {"n_estimators": count}) for count in (10, 20, 50)]
        serial_cache, parallel_cache = GridSearchCache(), GridSearchCache()
        serial = grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, cache=serial_cache,
                             grid=grid, rng_seed=3)
        parallel = grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, cache=parallel_cache,
                               grid=grid, rng_seed=3, jobs=2)
        self.assertEqual(serial, parallel)
        digest = self.landscape.digest()
        self.assertEqual(serial_cache.rmse(digest, self.encoding.name, RANDOM_FOREST),
                         parallel_cache.rmse(digest, self.encoding.name, RANDOM_FOREST))

    def test_runtime_error_skips_the_point(self):
        grid = [SurrogateSpec(RANDOM_FOREST, {"n_estimators": count}) for count in (10, 50)]

        def fragile_train(spec, inputs, labels, rng_seed):
            if spec == grid[0]:
                raise RuntimeError("linalg.cholesky: The factorization could not be completed")
            return train(spec, inputs, labels, rng_seed)

        with mock.patch.object(_grid_search_module, "train", side_effect=fragile_train):
            winner = grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, grid=grid, jobs=2)
        self.assertEqual(grid[1], winner)

    def test_every_point_failing(self):
        grid = [SurrogateSpec(RANDOM_FOREST, {"n_estimators": count}) for count in (10, 50)]
        with mock.patch.object(_grid_search_module, "train", side_effect=RuntimeError("nan")):
            with self.assertRaises(SearchFailureError):
                grid_search(RANDOM_FOREST, self.landscape, self.split, self.encoding, grid=grid)
