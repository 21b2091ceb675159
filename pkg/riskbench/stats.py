"""
Module ranks models, measures agreement between mean- and risk-based rankings, bootstraps the
cost of choosing a model by either ranking and relates rankings to landscape properties
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import kendalltau
from tqdm import tqdm

from riskbench.errors import CoverageError, PreconditionError, ShapeError, UndefinedTauError
from riskbench.landscape_analysis import PROFILE_COLUMNS, LandscapeProfile
from riskbench.metrics import (COST_USD, FINAL_FITNESS, HIGHER_IS_BETTER, LOWER_TAIL, ORIENTATION, MetricTable,
                               aggregate)
from riskbench.parallel_iter import iter_threaded

logger = logging.getLogger(__name__)

ALL_SCOPE = "all"
ALL_DATASETS = "All datasets"
NAIVE = "naive"
OUT_OF_BAG = "out_of_bag"
PROPERTY_NAMES = tuple(column for column in PROFILE_COLUMNS if column != "landscape")


@dataclass(frozen=True)
class KendallResult:
    """ Tau-b with its two-sided normal-approximation p-value

    """
    tau: float
    p_value: float


@dataclass(frozen=True)
class Ranking:
    """ Models ordered best first by an aggregate of one metric

    """
    metric: str
    stat: str
    scope: str
    models: Tuple[str, ...]
    values: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.models)

    def top(self, count: Optional[int] = None) -> "Ranking":
        count = len(self.models) if count is None else count
        return Ranking(self.metric, self.stat, self.scope, self.models[:count], self.values[:count])

    def value_of(self, model: str) -> float:
        return self.values[self.models.index(model)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"rank": np.arange(1, len(self.models) + 1), "model": list(self.models),
                             "value": list(self.values)})


@dataclass(frozen=True)
class BootstrapReport:
    """ Point estimate and percentile confidence interval of a cost saving

    Positive savings mean the CVaR-selected model was cheaper. relative_pct expresses the
    point estimate as a percentage of the full campaign budget when that budget is known.
    """
    point: float
    lower: float
    upper: float
    level: float
    n_bootstrap: int
    scheme: str
    relative_pct: Optional[float] = None

    @property
    def significant(self) -> bool:
        """ Whether the interval excludes zero

        :return: bool
        """
        return self.lower > 0 or self.upper < 0

    def to_dict(self) -> dict:
        return {"point": self.point, "lower": self.lower, "upper": self.upper, "level": self.level,
                "n_bootstrap": self.n_bootstrap, "scheme": self.scheme, "relative_pct": self.relative_pct,
                "significant": self.significant}


@dataclass(frozen=True)
class OOBReport:
    """ Out-of-bag savings on the mean and on the worst evaluation seed

    """
    average: BootstrapReport
    worst_case: BootstrapReport
    n_partitions: int

    def to_dict(self) -> dict:
        return {"average": self.average.to_dict(), "worst_case": self.worst_case.to_dict(),
                "n_partitions": self.n_partitions}


@dataclass(frozen=True)
class CorrelationCell:
    """ Kendall tau between one landscape property and one landscape-level difficulty measure

    tau is NaN when undefined (for example a property constant across landscapes).
    """
    property: str
    metric: str
    stat: str
    tau: float
    lower: float
    upper: float
    n_landscapes: int

    @property
    def significant(self) -> bool:
        return not math.isnan(self.tau) and (self.lower > 0 or self.upper < 0)

    def to_dict(self) -> dict:
        return {"property": self.property, "metric": self.metric, "stat": self.stat, "tau": self.tau,
                "lower": self.lower, "upper": self.upper, "n_landscapes": self.n_landscapes,
                "significant": self.significant}


def kendall_tau(rank_a: Sequence[float], rank_b: Sequence[float]) -> KendallResult:
    """ Tau-b between two paired samples

    :param rank_a: Values or ranks
    :param rank_b: Values or ranks paired with rank_a
    :raises: ShapeError for unequal or too short inputs, UndefinedTauError when an input is all tied
    :return: KendallResult
    """
    rank_a = np.asarray(rank_a, dtype=float)
    rank_b = np.asarray(rank_b, dtype=float)
    if rank_a.shape != rank_b.shape or rank_a.ndim != 1:
        raise ShapeError("kendall_tau needs two 1-D inputs of equal length")
    if rank_a.size < 2:
        raise ShapeError("kendall_tau needs at least 2 pairs")
    if np.ptp(rank_a) == 0 or np.ptp(rank_b) == 0:
        raise UndefinedTauError("Kendall tau is undefined for an input with all values tied")
    result = kendalltau(rank_a, rank_b, variant="b", method="asymptotic")
    if math.isnan(result.statistic):
        raise UndefinedTauError("Kendall tau is undefined for these inputs")
    return KendallResult(float(result.statistic), float(result.pvalue))


def _order(models: Sequence[str], values: Sequence[float], higher_is_better: bool) -> List[int]:
    sign = -1.0 if higher_is_better else 1.0
    return sorted(range(len(models)), key=lambda i: (sign * values[i], models[i]))


def rank_models(table: MetricTable, metric: str, stat: str = "mean", scope: str = ALL_SCOPE, alpha: float = 0.1,
                models: Optional[Iterable[str]] = None) -> Ranking:
    """ Order models by an aggregate of a metric

    With scope "all" the per-landscape aggregates are averaged with equal landscape weight.
    Ties go to the lexicographically smaller model id.

    :param table: Metric table
    :param metric: Metric column
    :param stat: "mean" or "cvar"
    :param scope: Landscape name or "all"
    :param alpha: CVaR tail level
    :param models: Models to rank, defaults to every model in scope
    :raises: CoverageError when a requested model has no rows in some landscape of the scope
    :return: Ranking
    """
    values = aggregate(table, metric, stat, alpha)
    if scope != ALL_SCOPE:
        values = values[values.index.get_level_values("landscape") == scope]
    per_model = values.unstack("landscape")
    models = sorted(per_model.index) if models is None else list(models)
    missing = [model for model in models if model not in per_model.index or per_model.loc[model].isna().any()]
    if missing:
        raise CoverageError("%d model(s) lack rows in scope %s" % (len(missing), scope), missing)
    if not models:
        raise CoverageError("no models in scope %s" % scope)
    means = [float(per_model.loc[model].mean()) for model in models]
    order = _order(models, means, HIGHER_IS_BETTER[metric])
    return Ranking(metric, stat, scope, tuple(models[i] for i in order), tuple(means[i] for i in order))


def _row_tail_mean(matrix: np.ndarray, alpha: float, orientation: str) -> np.ndarray:
    """ CVaR of every row, matching metrics.cvar

    """
    if orientation != LOWER_TAIL:
        return -_row_tail_mean(-matrix, alpha, LOWER_TAIL)
    size = matrix.shape[1]
    rank = min(size, max(1, math.ceil(alpha * size - 1e-9)))
    threshold = np.sort(matrix, axis=1)[:, rank - 1:rank]
    tail = matrix <= threshold
    return (matrix * tail).sum(axis=1) / tail.sum(axis=1)


def _best(models: Sequence[str], scores: np.ndarray, higher_is_better: bool) -> int:
    return _order(models, list(scores), higher_is_better)[0]


@dataclass(frozen=True)
class _LandscapeArrays:
    models: Tuple[str, ...]
    seeds: Tuple[int, ...]
    metric: np.ndarray
    cost: np.ndarray


def _arrays(table: MetricTable, landscape: str, metric: str, cost_metric: str) -> _LandscapeArrays:
    frame = table.frame[table.frame["landscape"] == landscape]
    if frame.empty:
        raise CoverageError("no runs for landscape %s" % landscape, [landscape])
    metric_wide = frame.pivot(index="model", columns="seed", values=metric).sort_index()
    cost_wide = frame.pivot(index="model", columns="seed", values=cost_metric).sort_index()
    complete = metric_wide.columns[metric_wide.notna().all(axis=0)]
    if len(complete) < metric_wide.shape[1]:
        logger.warning("%s: using the %d seeds shared by every model", landscape, len(complete))
    return _LandscapeArrays(tuple(metric_wide.index), tuple(int(seed) for seed in complete),
                            metric_wide[complete].to_numpy(dtype=float), cost_wide[complete].to_numpy(dtype=float))


def _selection_savings(data: _LandscapeArrays, rank_cols: np.ndarray, eval_cols: np.ndarray, alpha: float,
                       metric: str) -> Tuple[float, float]:
    higher = HIGHER_IS_BETTER[metric]
    ranking = data.metric[:, rank_cols]
    by_mean = _best(data.models, ranking.mean(axis=1), higher)
    by_cvar = _best(data.models, _row_tail_mean(ranking, alpha, ORIENTATION[metric]), higher)
    costs = data.cost[:, eval_cols]
    average = float(costs[by_mean].mean() - costs[by_cvar].mean())
    worst = float(costs[by_mean].max() - costs[by_cvar].max())
    return average, worst


def _interval(samples: np.ndarray, level: float) -> Tuple[float, float]:
    tail = 100.0 * (1.0 - level) / 2.0
    lower, upper = np.percentile(samples, [tail, 100.0 - tail])
    return float(lower), float(upper)


def _relative(point: float, budget_cost: Optional[float]) -> Optional[float]:
    return None if not budget_cost else 100.0 * point / budget_cost


def bootstrap_naive(table: MetricTable, landscape: str, n_bootstrap: int = 1000, rng_seed: int = 0,
                    alpha: float = 0.1, metric: str = FINAL_FITNESS, level: float = 0.95,
                    budget_cost: Optional[float] = None, jobs: int = 1, progress: bool = False) -> BootstrapReport:
    """ Cost saved by picking the top model by CVaR instead of by mean, seeds resampled per model

    Each sample resamples every model's seeds with replacement, picks the top model by mean and
    by CVaR of the metric, and records mean cost of the mean pick minus mean cost of the CVaR pick.
    Sample b draws from the b-th child of SeedSequence(rng_seed), so results do not depend on jobs.

    :param table: Metric table
    :param landscape: Landscape name
    :param n_bootstrap: Number of samples
    :param rng_seed: Seed
    :param alpha: CVaR tail level
    :param metric: Ranking metric
    :param level: Confidence level of the percentile interval
    :param budget_cost: Full-budget cost used for relative_pct
    :param jobs: Worker threads
    :param progress: Show a progress bar on standard error
    :raises: PreconditionError with fewer than 2 seeds
    :return: BootstrapReport
    """
    data = _arrays(table, landscape, metric, COST_USD)
    n_seeds = len(data.seeds)
    if n_seeds < 2:
        raise PreconditionError("naive bootstrap needs at least 2 seeds, %s has %d" % (landscape, n_seeds))
    every = np.arange(n_seeds)
    point, _ = _selection_savings(data, every, every, alpha, metric)
    children = np.random.SeedSequence(rng_seed).spawn(n_bootstrap)

    def one_sample(child):
        rng = np.random.default_rng(child)
        picks = rng.integers(0, n_seeds, size=(len(data.models), n_seeds))
        rows = np.arange(len(data.models))[:, None]
        resampled = _LandscapeArrays(data.models, data.seeds, data.metric[rows, picks], data.cost[rows, picks])
        return _selection_savings(resampled, every, every, alpha, metric)[0]

    runner = iter_threaded(jobs, child=children)(one_sample)
    samples = np.fromiter(tqdm(runner(), total=n_bootstrap, desc="bootstrap", disable=not progress),
                          dtype=float, count=n_bootstrap)
    lower, upper = _interval(samples, level)
    return BootstrapReport(point, lower, upper, level, n_bootstrap, NAIVE, _relative(point, budget_cost))


def bootstrap_oob(table: MetricTable, landscape: str, rank_fraction: float = 0.8, cap: int = 10000,
                  rng_seed: int = 0, alpha: float = 0.1, metric: str = FINAL_FITNESS, level: float = 0.95,
                  budget_cost: Optional[float] = None) -> OOBReport:
    """ Savings with models ranked on some seeds and evaluated on the held-out rest

    Every split of the seeds into rank_fraction ranking seeds and evaluation seeds is used, or
    cap uniformly drawn splits when there are more. Average savings compare mean evaluation
    costs; worst-case savings compare the most expensive evaluation seed.

    :param table: Metric table
    :param landscape: Landscape name
    :param rank_fraction: Share of seeds used for ranking
    :param cap: Maximum number of partitions
    :param rng_seed: Seed for partition sampling beyond the cap
    :param alpha: CVaR tail level
    :param metric: Ranking metric
    :param level: Confidence level
    :param budget_cost: Full-budget cost used for relative_pct
    :raises: PreconditionError with fewer than 5 seeds
    :return: OOBReport
    """
    data = _arrays(table, landscape, metric, COST_USD)
    n_seeds = len(data.seeds)
    if n_seeds < 5:
        raise PreconditionError("out-of-bag bootstrap needs at least 5 seeds, %s has %d" % (landscape, n_seeds))
    n_rank = min(n_seeds - 1, max(1, int(round(rank_fraction * n_seeds))))
    total = math.comb(n_seeds, n_rank)
    if total <= cap:
        partitions = [np.array(combo) for combo in itertools.combinations(range(n_seeds), n_rank)]
    else:
        rng = np.random.default_rng(rng_seed)
        partitions = [np.sort(rng.permutation(n_seeds)[:n_rank]) for _ in range(cap)]
        logger.info("%s: sampling %d of %d seed partitions", landscape, cap, total)
    results = np.empty((len(partitions), 2))
    for row, rank_cols in enumerate(partitions):
        eval_cols = np.setdiff1d(np.arange(n_seeds), rank_cols)
        results[row] = _selection_savings(data, rank_cols, eval_cols, alpha, metric)
    reports = []
    for column in range(2):
        point = float(results[:, column].mean())
        lower, upper = _interval(results[:, column], level)
        reports.append(BootstrapReport(point, lower, upper, level, len(partitions), OUT_OF_BAG,
                                       _relative(point, budget_cost)))
    return OOBReport(average=reports[0], worst_case=reports[1], n_partitions=len(partitions))


def _difficulty(data: _LandscapeArrays, metric: str, alpha: float) -> Dict[str, float]:
    return {"mean": float(data.metric.mean(axis=1).mean()),
            "cvar": float(_row_tail_mean(data.metric, alpha, ORIENTATION[metric]).mean())}


def _tau_or_nan(left: Sequence[float], right: Sequence[float]) -> float:
    left, right = np.asarray(left, dtype=float), np.asarray(right, dtype=float)
    keep = np.isfinite(left) & np.isfinite(right)
    try:
        return kendall_tau(left[keep], right[keep]).tau
    except (UndefinedTauError, ShapeError):
        return math.nan


def property_correlations(profiles: Sequence[LandscapeProfile], table: MetricTable, n_bootstrap: int = 1000,
                          rng_seed: int = 0, alpha: float = 0.1, metrics: Sequence[str] = (FINAL_FITNESS,),
                          properties: Sequence[str] = PROPERTY_NAMES, level: float = 0.95,
                          jobs: int = 1) -> List[CorrelationCell]:
    """ Kendall tau between landscape properties and landscape-level model performance

    Performance of a landscape is the mean over models of each model's mean (or CVaR) over
    seeds. Bootstrap samples resample every model's seeds with replacement.

    :param profiles: One profile per landscape
    :param table: Metric table
    :param n_bootstrap: Number of samples
    :param rng_seed: Seed
    :param alpha: CVaR tail level
    :param metrics: Metrics to correlate
    :param properties: Profile properties to correlate
    :param level: Confidence level
    :param jobs: Worker threads for the bootstrap samples
    :raises: PreconditionError with fewer than 3 landscapes in common
    :return: One CorrelationCell per (property, metric, stat)
    """
    by_name = {profile.landscape: profile for profile in profiles}
    landscapes = [name for name in table.landscapes if name in by_name]
    if len(landscapes) < 3:
        raise PreconditionError("property correlations need at least 3 landscapes, got %d" % len(landscapes))
    children = np.random.SeedSequence(rng_seed).spawn(n_bootstrap)
    cells = []
    for metric in metrics:
        arrays = [_arrays(table, name, metric, COST_USD) for name in landscapes]
        point = [_difficulty(data, metric, alpha) for data in arrays]

        def one_sample(child, arrays=arrays, metric=metric):
            rng = np.random.default_rng(child)
            resampled = []
            for data in arrays:
                picks = rng.integers(0, data.metric.shape[1], size=data.metric.shape)
                rows = np.arange(data.metric.shape[0])[:, None]
                resampled.append(_difficulty(_LandscapeArrays(data.models, data.seeds, data.metric[rows, picks],
                                                              data.cost), metric, alpha))
            return resampled

        samples = list(iter_threaded(jobs, child=children)(one_sample)())
        for name in properties:
            prop = [float(getattr(by_name[landscape], name)) for landscape in landscapes]
            for stat in ("mean", "cvar"):
                tau = _tau_or_nan(prop, [entry[stat] for entry in point])
                taus = np.array([_tau_or_nan(prop, [entry[stat] for entry in sample]) for sample in samples])
                taus = taus[np.isfinite(taus)]
                lower, upper = _interval(taus, level) if taus.size else (math.nan, math.nan)
                cells.append(CorrelationCell(name, metric, stat, tau, lower, upper, len(landscapes)))
    return cells


def pareto_front(points: Mapping[str, Tuple[float, float]], directions: Tuple[str, str] = ("max", "max")) -> List[str]:
    """ Models not strictly dominated by any other

    A model is dominated when another is at least as good on both axes and strictly better on
    one, "max" or "min" giving the better direction of each axis.

    :param points: Model id mapped to (first axis, second axis)
    :param directions: Better direction per axis
    :raises: PreconditionError for empty input or unknown directions
    :return: Front members sorted ascending by the first axis, then by model id
    """
    if not points:
        raise PreconditionError("pareto_front needs at least one point")
    if any(direction not in ("max", "min") for direction in directions):
        raise PreconditionError("directions must be 'max' or 'min'")
    signs = [1.0 if direction == "max" else -1.0 for direction in directions]
    models = sorted(points)
    xs = np.array([signs[0] * points[model][0] for model in models], dtype=float)
    ys = np.array([signs[1] * points[model][1] for model in models], dtype=float)
    front = []
    best_y = -np.inf
    # Sweep groups of equal x from the best x down
    for x_value in np.unique(xs)[::-1]:
        group = np.flatnonzero(xs == x_value)
        group_best = ys[group].max()
        if group_best > best_y:
            front.extend(models[i] for i in group if ys[i] == group_best)
        best_y = max(best_y, group_best)
    return sorted(front, key=lambda model: (points[model][0], model))


def rank_agreement_table(table: MetricTable, metric: str, alpha: float = 0.1) -> pd.DataFrame:
    """ Kendall tau between mean-based and CVaR-based model rankings per landscape

    The last row, "All datasets", compares the rankings averaged with equal landscape weight.

    :param table: Metric table
    :param metric: Metric column
    :param alpha: CVaR tail level
    :raises: UndefinedTauError when every model aggregates to the same value
    :return: Frame with columns landscape, tau, p_value, n_models
    """
    rows = []
    scopes = [(name, name) for name in table.landscapes] + [(ALL_DATASETS, ALL_SCOPE)]
    common = models_in_every_landscape(table)
    for label, scope in scopes:
        models = None if scope != ALL_SCOPE else common
        by_mean = rank_models(table, metric, "mean", scope, alpha, models)
        by_cvar = rank_models(table, metric, "cvar", scope, alpha, models)
        ordered = sorted(by_mean.models)
        result = kendall_tau([by_mean.value_of(m) for m in ordered], [by_cvar.value_of(m) for m in ordered])
        rows.append({"landscape": label, "tau": result.tau, "p_value": result.p_value, "n_models": len(ordered)})
    return pd.DataFrame(rows, columns=["landscape", "tau", "p_value", "n_models"])


def models_in_every_landscape(table: MetricTable) -> List[str]:
    present = table.frame.groupby("model")["landscape"].nunique()
    return sorted(present.index[present == len(table.landscapes)])


def agreement_property_correlation(agreement: Mapping[str, float], profiles: Sequence[LandscapeProfile],
                                   properties: Sequence[str] = PROPERTY_NAMES) -> pd.DataFrame:
    """ Kendall tau between each landscape property and per-landscape rank agreement

    :param agreement: Landscape name mapped to its mean-vs-CVaR tau
    :param profiles: One profile per landscape
    :param properties: Properties to correlate
    :raises: PreconditionError with fewer than 3 landscapes in common
    :return: Frame with columns property, tau, p_value (NaN where undefined)
    """
    by_name = {profile.landscape: profile for profile in profiles}
    landscapes = sorted(name for name in agreement if name in by_name and name != ALL_DATASETS)
    if len(landscapes) < 3:
        raise PreconditionError("agreement correlations need at least 3 landscapes, got %d" % len(landscapes))
    values = np.array([agreement[name] for name in landscapes], dtype=float)
    rows = []
    for name in properties:
        prop = np.array([float(getattr(by_name[landscape], name)) for landscape in landscapes])
        keep = np.isfinite(prop) & np.isfinite(values)
        try:
            result = kendall_tau(prop[keep], values[keep])
            rows.append({"property": name, "tau": result.tau, "p_value": result.p_value})
        except (UndefinedTauError, ShapeError):
            rows.append({"property": name, "tau": math.nan, "p_value": math.nan})
    return pd.DataFrame(rows, columns=["property", "tau", "p_value"])
