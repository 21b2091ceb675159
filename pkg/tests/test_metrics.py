import os
import tempfile
from unittest import TestCase

import numpy as np
import pandas as pd

from riskbench.campaign import CampaignConfig, run_random_baseline
from riskbench.errors import PairingError, PreconditionError, SchemaError
from riskbench.landscape_store import Landscape, make_split
from riskbench.metrics import (COST_USD, DELTA_G_AUC, FINAL_FITNESS, N_ABOVE, UPPER_TAIL, CostModel, MetricTable,
                               aggregate, build_metric_table, cost_to_threshold, count_above_threshold, cvar,
                               delta_g_auc, delta_g_curve, fitness_threshold, mean_delta_g_curve,
                               mean_payoff_curves, var)
from riskbench.records import BASELINE_ID, FAILED, RunRecord
from tests.fixtures import additive, metric_table

# Ten single-site variants with normalized fitness 0, 1/9, ..., 1
TINY = Landscape("tiny", tuple("ACDEFGHIKL"), np.arange(10.0))


def run(acquired, seed=0, baseline=False, model="rf/ei/one-hot", **extra) -> RunRecord:
    best = np.maximum.accumulate([TINY.norm_fitness[list(batch)].max() for batch in acquired])
    return RunRecord(model_id=BASELINE_ID if baseline else model, landscape="tiny", seed=seed,
                     acquired=tuple(tuple(batch) for batch in acquired), payoff_curve=tuple(best.tolist()),
                     is_baseline=baseline, **extra)


class TestRisk(TestCase):
    def test_var_and_cvar(self):
        values = np.arange(1.0, 11.0)
        self.assertEqual(1.0, var(values, 0.1))
        self.assertEqual(1.0, cvar(values, 0.1))
        self.assertEqual(2.0, var(values, 0.2))
        self.assertEqual(3.0, var(values, 0.25))
        self.assertEqual(2.0, cvar(values, 0.25))

    def test_upper_tail_mirrors(self):
        values = np.arange(1.0, 11.0)
        self.assertEqual(9.0, cvar(values, 0.25, UPPER_TAIL))
        self.assertEqual(-cvar(-values, 0.3), cvar(values, 0.3, UPPER_TAIL))

    def test_ties_at_threshold_are_included(self):
        self.assertEqual(1.0, cvar([5.0, 1.0, 1.0, 1.0], 0.25))
        self.assertAlmostEqual(2.5, cvar([1.0, 3.0, 3.0, 3.0, 9.0], 0.4))

    def test_cvar_never_exceeds_mean(self):
        values = np.random.default_rng(1).normal(size=37)
        for alpha in (0.05, 0.1, 0.5, 0.9):
            self.assertLessEqual(cvar(values, alpha), values.mean() + 1e-12)

    def test_invalid(self):
        with self.assertRaises(PreconditionError):
            cvar([], 0.1)
        with self.assertRaises(PreconditionError):
            var([1.0], 1.0)
        with self.assertRaises(PreconditionError):
            cvar([1.0, 2.0], 0.5, "sideways")


class TestThresholdAndCost(TestCase):
    def test_threshold(self):
        self.assertEqual(1.0, fitness_threshold(TINY, 90.0))
        self.assertAlmostEqual(8.0 / 9.0, fitness_threshold(TINY, 80.0))
        self.assertAlmostEqual(2.0 / 9.0, fitness_threshold(TINY, 50.0, pool=[0, 1, 2, 3]))
        with self.assertRaises(PreconditionError):
            fitness_threshold(TINY, 100.0)

    def test_cost_when_reached(self):
        record = run([(0, 1), (9,), (5,)])
        outcome = cost_to_threshold(record, TINY, CostModel(), 90.0)
        self.assertEqual(450.0, outcome.cost)
        self.assertFalse(outcome.censored)
        outcome = cost_to_threshold(record, TINY, CostModel(unit_cost=10.0, includes_seed=False), 90.0)
        self.assertEqual(10.0, outcome.cost)

    def test_cost_censored_at_budget(self):
        outcome = cost_to_threshold(run([(0, 1), (2,), (3,)]), TINY, CostModel(), 90.0)
        self.assertEqual(600.0, outcome.cost)
        self.assertTrue(outcome.censored)

    def test_count_above(self):
        self.assertEqual(1, count_above_threshold(run([(0, 1), (9,), (5,)]), TINY, 80.0))
        self.assertEqual(2, count_above_threshold(run([(8, 9)]), TINY, 80.0))

    def test_unit_cost_positive(self):
        with self.assertRaises(SchemaError):
            CostModel(unit_cost=0.0)


class TestDeltaG(TestCase):
    def test_curve_and_area(self):
        model_run = run([(0, 1), (5,), (9,)])
        baseline = run([(1, 0), (2,), (3,)], baseline=True)
        curve = delta_g_curve(model_run, baseline)
        np.testing.assert_allclose([3.0 / 9.0, 6.0 / 9.0], curve)
        self.assertAlmostEqual(0.5, delta_g_auc(curve))

    def test_area_edge_cases(self):
        self.assertEqual(0.0, delta_g_auc([]))
        self.assertEqual(0.25, delta_g_auc([0.25]))
        self.assertEqual(4.0, delta_g_auc([1.0, 2.0, 3.0]))

    def test_baseline_against_itself(self):
        landscape = additive()
        split = make_split(landscape, 0)
        config = CampaignConfig(n_init=8, batch_size=4, n_cycles=3)
        areas = []
        for seed in range(20):
            baseline = run_random_baseline(config, landscape, split, seed)
            areas.append(delta_g_auc(delta_g_curve(baseline, baseline)))
        self.assertAlmostEqual(0.0, float(np.mean(areas)), delta=1e-12)

    def test_pairing_errors(self):
        model_run = run([(0, 1), (5,)])
        with self.assertRaises(PairingError):
            delta_g_curve(model_run, run([(0, 2), (5,)], baseline=True))
        with self.assertRaises(PairingError):
            delta_g_curve(model_run, run([(0, 1), (5,)], seed=1, baseline=True))
        with self.assertRaises(PairingError):
            delta_g_curve(model_run, run([(0, 1), (5,), (6,)], baseline=True))
        with self.assertRaises(PairingError):
            delta_g_curve(model_run, run([(0, 1), (5,)], baseline=True, config_digest="other"))


class TestMetricTable(TestCase):
    def records(self):
        return [run([(0, 1), (9,), (5,)], seed=0), run([(0, 1), (2,), (3,)], seed=0, baseline=True),
                run([(2, 3), (4,), (5,)], seed=1), run([(3, 2), (9,), (8,)], seed=1, baseline=True),
                run([(4, 5), (6,)], seed=2, status=FAILED, diagnostic="boom"),
                run([(6, 7), (8,), (9,)], seed=3)]

    def test_build(self):
        table = build_metric_table(self.records(), {"tiny": TINY}, {}, percentile=90.0)
        # Failed and unpaired runs drop out
        self.assertEqual(2, len(table))
        self.assertEqual(["rf/ei/one-hot"], table.models)
        self.assertEqual([0, 1], table.seeds("tiny"))
        first = table.frame.iloc[0]
        self.assertEqual(1.0, first[FINAL_FITNESS])
        self.assertAlmostEqual(13.0 / 18.0, first[DELTA_G_AUC])
        self.assertEqual(450.0, first[COST_USD])
        self.assertEqual(1, first[N_ABOVE])
        second = table.frame.iloc[1]
        self.assertTrue(second["censored"])
        self.assertEqual(600.0, second[COST_USD])
        self.assertAlmostEqual((-5.0 - 4.0) / 18.0, second[DELTA_G_AUC])

    def test_curves(self):
        table = build_metric_table(self.records(), {"tiny": TINY}, {}, percentile=90.0)
        payoff = mean_payoff_curves(table)
        baseline = payoff[(payoff["model"] == BASELINE_ID)]
        np.testing.assert_allclose([2.0 / 9.0, 11.0 / 18.0, 2.0 / 3.0], baseline["value"])
        self.assertEqual({2}, set(baseline["n_seeds"]))
        delta = mean_delta_g_curve(table)
        self.assertEqual([1, 2], delta["iteration"].tolist())

    def test_subset_and_values(self):
        table = metric_table({"a": [0.1, 0.2], "b": [0.5, 0.6]})
        self.assertEqual(["b"], table.subset(models=["b"]).models)
        self.assertEqual([0.5, 0.6], table.values("b", "toy", FINAL_FITNESS).tolist())

    def test_csv_preserves_frame(self):
        table = metric_table({"a": [0.1, 0.2], "b": [0.5, 0.6]})
        handle, path = tempfile.mkstemp(suffix=".csv")
        os.close(handle)
        try:
            table.to_csv(path, header=["riskbench test"])
            with open(path, "r", encoding="utf-8") as stream:
                self.assertEqual("# riskbench test\n", stream.readline())
            pd.testing.assert_frame_equal(table.frame, MetricTable.read_csv(path).frame, check_dtype=False)
        finally:
            os.remove(path)

    def test_missing_columns(self):
        with self.assertRaises(SchemaError):
            MetricTable(pd.DataFrame({"model": ["a"]}))


class TestAggregate(TestCase):
    def setUp(self):
        self.table = metric_table({"a": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
                                   "b": [0.5] * 10})

    def test_mean_and_cvar(self):
        means = aggregate(self.table, FINAL_FITNESS)
        self.assertAlmostEqual(0.55, means[("a", "toy")])
        cvars = aggregate(self.table, FINAL_FITNESS, "cvar", alpha=0.2)
        self.assertAlmostEqual(0.15, cvars[("a", "toy")])
        self.assertAlmostEqual(0.5, cvars[("b", "toy")])

    def test_cost_uses_upper_tail(self):
        cvars = aggregate(self.table, COST_USD, "cvar", alpha=0.2)
        self.assertAlmostEqual(85.0, cvars[("a", "toy")])

    def test_unknown_metric_or_stat(self):
        with self.assertRaises(SchemaError):
            aggregate(self.table, "auc")
        with self.assertRaises(SchemaError):
            aggregate(self.table, FINAL_FITNESS, "median")
