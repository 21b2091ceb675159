import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np

from riskbench.acquisition import AcquisitionSpec
from riskbench.errors import CorruptStoreError
from riskbench.records import BASELINE_ID, FAILED, ModelSpec, RunRecord
from riskbench.run_store import RunStore
from tests.fixtures import FAST_SPECS


def record(seed: int = 0, landscape: str = "toy", payoff=(0.2, 0.5, 0.5), baseline: bool = False, **extra):
    model = None if baseline else ModelSpec(FAST_SPECS["gp"], AcquisitionSpec("ei"))
    return RunRecord(model_id=BASELINE_ID if baseline else model.model_id, landscape=landscape, seed=seed,
                     acquired=((3, 1), (7,), (2,)), payoff_curve=payoff, is_baseline=baseline, model=model, **extra)


class TestRecord(TestCase):
    def test_model_id(self):
        self.assertEqual("gp/ei/one-hot", ModelSpec(FAST_SPECS["gp"], AcquisitionSpec("ei")).model_id)

    def test_dict_round_trip_keeps_digest(self):
        original = record(status=FAILED, diagnostic="cholesky failed", config_digest="abcd")
        restored = RunRecord.from_dict(original.to_dict())
        self.assertEqual(original, restored)
        self.assertEqual(original.digest(), restored.digest())
        self.assertFalse(restored.completed)

    def test_derived_fields(self):
        run = record()
        self.assertEqual(2, run.n_cycles)
        self.assertEqual(0.5, run.final_fitness)
        np.testing.assert_array_equal([3, 1, 7, 2], run.all_acquired())
        np.testing.assert_array_equal([2, 3, 4], run.cumulative_counts())

    def test_baseline_key_differs(self):
        self.assertNotEqual(record().key, record(baseline=True).key)
        self.assertTrue(record(baseline=True).key[3])


class TestRunStore(TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.store = RunStore(os.path.join(self.directory, "runs"))

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_append_and_load(self):
        self.store.extend([record(0), record(1), record(0, landscape="other"), record(0, baseline=True)])
        self.assertEqual(["other", "toy"], self.store.landscapes())
        self.assertEqual(3, len(self.store.load("toy")))
        self.assertEqual(4, len(self.store.load()))
        self.assertEqual([], self.store.load("missing"))
        self.assertIn(record(1).key, self.store.completed_keys("toy"))

    def test_later_record_wins(self):
        self.store.append(record(0, payoff=(0.1, 0.2, 0.3)))
        self.store.append(record(0, payoff=(0.1, 0.2, 0.9)))
        loaded = self.store.load("toy")
        self.assertEqual(1, len(loaded))
        self.assertEqual(0.9, loaded[0].final_fitness)

    def test_unsafe_names_are_escaped(self):
        self.store.append(record(landscape="gb1/4 site"))
        self.assertEqual(["gb1_4_site"], self.store.landscapes())
        self.assertEqual(1, len(self.store.load("gb1/4 site")))

    def test_corrupt_line_reported(self):
        self.store.append(record(0))
        with open(self.store.path_for("toy"), "a", encoding="utf-8") as stream:
            stream.write("\n{\"model_id\": \"gp/ei\n")
        with self.assertRaises(CorruptStoreError) as ctx:
            self.store.load("toy")
        self.assertEqual(3, ctx.exception.line)
        self.assertIn("reset", str(ctx.exception))

    def test_records_survive_reopen(self):
        self.store.append(record(5))
        reopened = RunStore(self.store.directory)
        self.assertEqual(record(5), reopened.load("toy")[0])
