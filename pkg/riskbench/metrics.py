"""
Module computes per-run performance, cold-start, cost and risk metrics and aggregates them over
seeds
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from riskbench.errors import PairingError, PreconditionError, SchemaError
from riskbench.landscape_store import Landscape, SplitPlan
from riskbench.records import RunRecord
from riskbench.validation import ArgumentChecker

logger = logging.getLogger(__name__)

LOWER_TAIL = "lower_tail"
UPPER_TAIL = "upper_tail"

FINAL_FITNESS = "final_fitness"
DELTA_G_AUC = "delta_g_auc"
COST_USD = "cost_usd"
N_ABOVE = "n_above_p99"
COLUMNS = ("model", "landscape", "seed", FINAL_FITNESS, DELTA_G_AUC, COST_USD, "censored", N_ABOVE)

# Tail that holds the bad outcomes of each metric
ORIENTATION = {FINAL_FITNESS: LOWER_TAIL, DELTA_G_AUC: LOWER_TAIL, N_ABOVE: LOWER_TAIL, COST_USD: UPPER_TAIL}
HIGHER_IS_BETTER = {FINAL_FITNESS: True, DELTA_G_AUC: True, N_ABOVE: True, COST_USD: False}
METRICS = tuple(ORIENTATION)
STATS = ("mean", "cvar")

_EPS = 1e-9

# (model id, landscape, seed)
CurveKey = Tuple[str, str, int]


@dataclass(frozen=True)
class CostModel:
    """ Wet-lab cost of testing variants

    """
    unit_cost: float = 150.0
    includes_seed: bool = True

    def __post_init__(self):
        if not self.unit_cost > 0:
            raise SchemaError("unit_cost must be positive")


@dataclass(frozen=True)
class CostOutcome:
    """ Cost to reach a fitness threshold; censored runs carry the full-budget cost

    """
    cost: float
    censored: bool


def _order_rank(alpha: float, size: int) -> int:
    return min(size, max(1, math.ceil(alpha * size - _EPS)))


@ArgumentChecker(values="nonempty", alpha="open_unit_interval")
def var(values: Sequence[float], alpha: float) -> float:
    """ Empirical alpha-quantile: the ceil(alpha * n)-th smallest value

    :param values: Sample
    :param alpha: Tail level
    :return: VaR
    """
    ordered = np.sort(np.asarray(values, dtype=float))
    return float(ordered[_order_rank(alpha, ordered.size) - 1])


@ArgumentChecker(values="nonempty", alpha="open_unit_interval")
def cvar(values: Sequence[float], alpha: float, orientation: str = LOWER_TAIL) -> float:
    """ Mean of the alpha tail holding the bad outcomes

    lower_tail averages the values at or below VaR; upper_tail is the mirror image for metrics
    where high values are bad.

    :param values: Sample
    :param alpha: Tail level
    :param orientation: LOWER_TAIL or UPPER_TAIL
    :return: CVaR
    """
    values = np.asarray(values, dtype=float)
    if orientation == UPPER_TAIL:
        return -cvar(-values, alpha, LOWER_TAIL)
    if orientation != LOWER_TAIL:
        raise PreconditionError("unknown orientation %r" % orientation)
    threshold = var(values, alpha)
    return float(values[values <= threshold].mean())


def _pool_values(landscape: Landscape, pool: Optional[Sequence[int]]) -> np.ndarray:
    if pool is None:
        return landscape.norm_fitness
    return landscape.norm_fitness[np.asarray(pool, dtype=np.int64)]


@ArgumentChecker(percentile="percentile")
def fitness_threshold(landscape: Landscape, percentile: float, pool: Optional[Sequence[int]] = None) -> float:
    """ Empirical percentile of normalized fitness over a pool

    The threshold is the ceil((1 - p/100) * n)-th largest pool value, so at least that many pool
    members reach it.

    :param landscape: Landscape
    :param percentile: p in (0, 100)
    :param pool: Landscape indices, defaults to the whole landscape
    :return: Threshold
    """
    values = np.sort(_pool_values(landscape, pool))
    count = _order_rank((100.0 - percentile) / 100.0, values.size)
    return float(values[values.size - count])


def cost_to_threshold(run: RunRecord, landscape: Landscape, cost_model: CostModel, percentile: float,
                      pool: Optional[Sequence[int]] = None) -> CostOutcome:
    """ Cost of the variants tested until the threshold was first reached

    :param run: Run record
    :param landscape: Landscape of the run
    :param cost_model: Unit cost and seed accounting
    :param percentile: Threshold percentile
    :param pool: Pool the threshold is computed over
    :return: CostOutcome, censored at the full budget when never reached
    """
    threshold = fitness_threshold(landscape, percentile, pool)
    counts = run.cumulative_counts()
    seed_count = 0 if cost_model.includes_seed else counts[0]
    hits = np.flatnonzero(np.asarray(run.payoff_curve) >= threshold)
    if hits.size:
        return CostOutcome(float((counts[hits[0]] - seed_count) * cost_model.unit_cost), False)
    return CostOutcome(float((counts[-1] - seed_count) * cost_model.unit_cost), True)


def count_above_threshold(run: RunRecord, landscape: Landscape, percentile: float,
                          pool: Optional[Sequence[int]] = None) -> int:
    """ Acquired variants at or above the threshold, seed pool included

    :param run: Run record
    :param landscape: Landscape of the run
    :param percentile: Threshold percentile
    :param pool: Pool the threshold is computed over
    :return: Count
    """
    threshold = fitness_threshold(landscape, percentile, pool)
    return int(np.count_nonzero(landscape.norm_fitness[run.all_acquired()] >= threshold))


def check_pairing(model_run: RunRecord, baseline_run: RunRecord):
    """ Confirm a model run and a baseline describe the same landscape, seed and budget

    :param model_run: Model run
    :param baseline_run: Baseline run
    :raises: PairingError naming the first mismatch
    """
    if model_run.landscape != baseline_run.landscape:
        raise PairingError("landscapes differ: %s vs %s" % (model_run.landscape, baseline_run.landscape))
    if model_run.seed != baseline_run.seed:
        raise PairingError("seeds differ: %d vs %d" % (model_run.seed, baseline_run.seed))
    if model_run.config_digest != baseline_run.config_digest:
        raise PairingError("runs were produced under different campaign configs")
    if len(model_run.payoff_curve) != len(baseline_run.payoff_curve):
        raise PairingError("iteration counts differ: %d vs %d" % (model_run.n_cycles, baseline_run.n_cycles))
    if model_run.acquired and set(model_run.acquired[0]) != set(baseline_run.acquired[0]):
        raise PairingError("seed pools differ for seed %d" % model_run.seed)


def delta_g_curve(model_run: RunRecord, baseline_run: RunRecord) -> np.ndarray:
    """ Payoff advantage over the paired baseline for iterations 1..K

    :param model_run: Model run
    :param baseline_run: Paired baseline
    :raises: PairingError for runs that are not paired
    :return: Array of length K
    """
    check_pairing(model_run, baseline_run)
    return np.asarray(model_run.payoff_curve[1:], dtype=float) - np.asarray(baseline_run.payoff_curve[1:], dtype=float)


def delta_g_auc(curve: Sequence[float]) -> float:
    """ Trapezoidal area at unit spacing; a single point returns its value, an empty curve 0

    :param curve: Delta-G values for iterations 1..K
    :return: Area
    """
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0:
        return 0.0
    if curve.size == 1:
        return float(curve[0])
    return float(trapezoid(curve, dx=1.0))


class MetricTable:
    """
    One row per completed model run: (model, landscape, seed) with every per-run metric

    Curves are kept alongside for plotting: payoff curves of model and baseline runs, and Delta-G
    curves of model runs.
    """

    def __init__(self, frame: pd.DataFrame, payoff_curves: Optional[Dict[CurveKey, Tuple[float, ...]]] = None,
                 delta_curves: Optional[Dict[CurveKey, np.ndarray]] = None, percentile: float = 99.0):
        missing = set(COLUMNS).difference(frame.columns)
        if missing:
            raise SchemaError("metric table lacks columns: %s" % ", ".join(sorted(missing)))
        self.frame = frame.loc[:, list(COLUMNS)].sort_values(["landscape", "model", "seed"]).reset_index(drop=True)
        self.payoff_curves = payoff_curves or {}
        self.delta_curves = delta_curves or {}
        self.percentile = percentile

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def models(self) -> List[str]:
        return sorted(self.frame["model"].unique())

    @property
    def landscapes(self) -> List[str]:
        return sorted(self.frame["landscape"].unique())

    def seeds(self, landscape: str) -> List[int]:
        return sorted(self.frame.loc[self.frame["landscape"] == landscape, "seed"].unique().tolist())

    def subset(self, landscape: Optional[str] = None, models: Optional[Iterable[str]] = None) -> "MetricTable":
        """ Rows of one landscape and/or some models

        :param landscape: Landscape name
        :param models: Model ids
        :return: MetricTable over the selected rows
        """
        mask = np.ones(len(self.frame), dtype=bool)
        if landscape is not None:
            mask &= (self.frame["landscape"] == landscape).to_numpy()
        if models is not None:
            mask &= self.frame["model"].isin(list(models)).to_numpy()
        return MetricTable(self.frame.loc[mask], self.payoff_curves, self.delta_curves, self.percentile)

    def values(self, model: str, landscape: str, metric: str) -> pd.Series:
        """ Metric per seed for one (model, landscape)

        :param model: Model id
        :param landscape: Landscape name
        :param metric: Metric column
        :return: Series indexed by seed
        """
        rows = self.frame[(self.frame["model"] == model) & (self.frame["landscape"] == landscape)]
        return rows.set_index("seed")[metric].astype(float)

    def to_csv(self, path: str, header: Sequence[str] = ()):
        """ Write the table, preceded by '# ' comment lines

        :param path: Output file
        :param header: Comment lines
        """
        with open(path, "w", encoding="utf-8", newline="") as stream:
            for line in header:
                stream.write("# %s\n" % line)
            self.frame.to_csv(stream, index=False, float_format="%.10g", lineterminator="\n")

    @staticmethod
    def read_csv(path: str) -> "MetricTable":
        frame = pd.read_csv(path, comment="#")
        frame["censored"] = frame["censored"].astype(bool)
        return MetricTable(frame)


def build_metric_table(records: Iterable[RunRecord], landscapes: Mapping[str, Landscape],
                       splits: Mapping[str, SplitPlan], cost_model: CostModel = CostModel(),
                       percentile: float = 99.0) -> MetricTable:
    """ Per-run metrics for every completed model run with a paired baseline

    Failed runs are excluded with a logged count; K = 0 runs get a Delta-G AUC of 0.

    :param records: Model and baseline records
    :param landscapes: Landscapes by name
    :param splits: Splits by landscape name; thresholds use the campaign pool
    :param cost_model: Cost model
    :param percentile: Threshold percentile
    :raises: PairingError for a model run whose baseline disagrees on the seed pool
    :return: MetricTable
    """
    records = list(records)
    failed = [record for record in records if not record.completed]
    if failed:
        logger.warning("Excluding %d failed run(s) from metrics", len(failed))
    baselines = {(r.landscape, r.seed, r.config_digest): r for r in records if r.is_baseline and r.completed}
    rows, payoff_curves, delta_curves = [], {}, {}
    unpaired = 0
    for record in records:
        if not record.completed:
            continue
        payoff_curves[(record.model_id, record.landscape, record.seed)] = record.payoff_curve
        if record.is_baseline:
            continue
        baseline = baselines.get((record.landscape, record.seed, record.config_digest))
        if baseline is None:
            unpaired += 1
            continue
        landscape = landscapes[record.landscape]
        pool = splits[record.landscape].campaign_pool if record.landscape in splits else None
        curve = delta_g_curve(record, baseline)
        delta_curves[(record.model_id, record.landscape, record.seed)] = curve
        cost = cost_to_threshold(record, landscape, cost_model, percentile, pool)
        rows.append({"model": record.model_id, "landscape": record.landscape, "seed": int(record.seed),
                     FINAL_FITNESS: record.final_fitness, DELTA_G_AUC: delta_g_auc(curve),
                     COST_USD: cost.cost, "censored": cost.censored,
                     N_ABOVE: count_above_threshold(record, landscape, percentile, pool)})
    if unpaired:
        logger.warning("Skipping %d model run(s) without a paired baseline", unpaired)
    frame = pd.DataFrame(rows, columns=list(COLUMNS))
    return MetricTable(frame, payoff_curves, delta_curves, percentile)


def aggregate(table: MetricTable, metric: str, stat: str = "mean", alpha: float = 0.1) -> pd.Series:
    """ Mean or CVaR of a metric over seeds for every (model, landscape)

    CVaR uses the metric's bad tail; censored costs enter at their full-budget value.

    :param table: Metric table
    :param metric: One of METRICS
    :param stat: "mean" or "cvar"
    :param alpha: CVaR tail level
    :return: Series indexed by (model, landscape)
    """
    if metric not in ORIENTATION:
        raise SchemaError("unknown metric %r, expected one of %s" % (metric, METRICS))
    if stat not in STATS:
        raise SchemaError("unknown stat %r, expected one of %s" % (stat, STATS))
    grouped = table.frame.groupby(["model", "landscape"])[metric]
    if stat == "mean":
        return grouped.mean().astype(float)
    return grouped.apply(lambda values: cvar(values.to_numpy(dtype=float), alpha, ORIENTATION[metric])).astype(float)


def _mean_curves(curves: Mapping[CurveKey, Sequence[float]]) -> pd.DataFrame:
    collected: Dict[Tuple[str, str], List[np.ndarray]] = defaultdict(list)
    for (model, landscape, _), curve in curves.items():
        collected[(model, landscape)].append(np.asarray(curve, dtype=float))
    rows = []
    for (model, landscape), members in sorted(collected.items()):
        length = min(len(curve) for curve in members)
        mean = np.mean([curve[:length] for curve in members], axis=0)
        for step, value in enumerate(mean):
            rows.append({"model": model, "landscape": landscape, "iteration": step, "value": float(value),
                         "n_seeds": len(members)})
    return pd.DataFrame(rows, columns=["model", "landscape", "iteration", "value", "n_seeds"])


def mean_payoff_curves(table: MetricTable) -> pd.DataFrame:
    """ Seed-averaged payoff curve per (model, landscape), baseline included, iterations 0..K

    :param table: Metric table with curves
    :return: Long-format frame (model, landscape, iteration, value, n_seeds)
    """
    return _mean_curves(table.payoff_curves)


def mean_delta_g_curve(table: MetricTable) -> pd.DataFrame:
    """ Seed-averaged Delta-G curve per (model, landscape), iterations 1..K

    :param table: Metric table with curves
    :return: Long-format frame (model, landscape, iteration, value, n_seeds)
    """
    frame = _mean_curves(table.delta_curves)
    frame["iteration"] = frame["iteration"] + 1
    return frame
