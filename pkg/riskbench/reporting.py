"""
Module writes the plot-ready outputs of a benchmark: profiles, metric tables, rankings,
agreement tables, bootstrap reports, Pareto fronts, mean curves and optional static charts

Every file starts with a header naming the tool version and the config digest; nothing depends
on the clock, so rerunning a report over the same store reproduces it byte for byte.
"""
import json
import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from riskbench import __version__
from riskbench.errors import BenchmarkError, PreconditionError, SchemaError
from riskbench.landscape_analysis import PROFILE_COLUMNS, LandscapeProfile
from riskbench.metrics import (COST_USD, DELTA_G_AUC, FINAL_FITNESS, STATS, MetricTable, aggregate,
                               mean_delta_g_curve, mean_payoff_curves)
from riskbench.records import BASELINE_ID
from riskbench.stats import (ALL_DATASETS, ALL_SCOPE, agreement_property_correlation, bootstrap_naive,
                             bootstrap_oob, models_in_every_landscape, pareto_front, property_correlations,
                             rank_agreement_table, rank_models)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


def header_lines(config_digest: str) -> List[str]:
    """ Comment lines opening every output file

    :param config_digest: BenchmarkConfig.digest()
    :return: Lines without the comment marker
    """
    return ["riskbench %s config %s" % (__version__, config_digest)]


def write_frame(frame: pd.DataFrame, path: str, header: Sequence[str]) -> str:
    """ CSV preceded by '# ' header lines

    :param frame: Table
    :param path: Output file
    :param header: Header lines
    :return: path
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as stream:
        for line in header:
            stream.write("# %s\n" % line)
        frame.to_csv(stream, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(data: Dict[str, Any], path: str, header: Sequence[str]) -> str:
    """ JSON document with the header under "header"; NaN becomes null

    :param data: Payload
    :param path: Output file
    :param header: Header lines
    :return: path
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as stream:
        json.dump({"header": list(header), "data": _plain(data)}, stream, indent=2, sort_keys=True)
        stream.write("\n")
    return path


def profiles_frame(profiles: Sequence[LandscapeProfile]) -> pd.DataFrame:
    return pd.DataFrame([profile.to_row() for profile in profiles], columns=list(PROFILE_COLUMNS))


def read_profiles(path: str) -> List[LandscapeProfile]:
    """ Profiles back from a profile CSV

    :param path: File written by write_frame(profiles_frame(...))
    :raises: SchemaError when columns are missing
    :return: One LandscapeProfile per row
    """
    frame = pd.read_csv(path, comment="#")
    missing = set(PROFILE_COLUMNS).difference(frame.columns)
    if missing:
        raise SchemaError("%s lacks profile columns: %s" % (path, ", ".join(sorted(missing))))
    profiles = []
    for row in frame.to_dict("records"):
        values = {column: row[column] for column in PROFILE_COLUMNS}
        values["landscape"] = str(values["landscape"])
        values["n"] = int(values["n"])
        profiles.append(LandscapeProfile(**values))
    return profiles


def rankings_frame(table: MetricTable, metric: str, stat: str, alpha: float, top: int) -> pd.DataFrame:
    """ Top models per landscape and over all landscapes

    :param table: Metric table
    :param metric: Metric column
    :param stat: "mean" or "cvar"
    :param alpha: CVaR tail level
    :param top: Rows per scope
    :return: Frame with columns scope, rank, model, value
    """
    frames = []
    common = models_in_every_landscape(table)
    scopes = list(table.landscapes) + ([ALL_SCOPE] if common else [])
    for scope in scopes:
        ranking = rank_models(table, metric, stat, scope, alpha, common if scope == ALL_SCOPE else None)
        frame = ranking.top(top).to_frame()
        frame.insert(0, "scope", ALL_DATASETS if scope == ALL_SCOPE else scope)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def pareto_frame(table: MetricTable, alpha: float) -> pd.DataFrame:
    """ Mean-versus-CVaR and performance-versus-cost fronts per landscape

    :param table: Metric table
    :param alpha: CVaR tail level
    :return: Frame with columns front, landscape, model, x, y, on_front
    """
    fronts = [("mean_vs_cvar_final_fitness", (FINAL_FITNESS, "mean"), (FINAL_FITNESS, "cvar"), ("max", "max")),
              ("final_fitness_vs_cost", (FINAL_FITNESS, "mean"), (COST_USD, "mean"), ("max", "min")),
              ("delta_g_auc_vs_cost", (DELTA_G_AUC, "mean"), (COST_USD, "mean"), ("max", "min"))]
    rows = []
    for name, (x_metric, x_stat), (y_metric, y_stat), directions in fronts:
        xs = aggregate(table, x_metric, x_stat, alpha)
        ys = aggregate(table, y_metric, y_stat, alpha)
        for landscape in table.landscapes:
            points = {model: (float(xs[(model, landscape)]), float(ys[(model, landscape)]))
                      for model in table.models if (model, landscape) in xs.index}
            front = set(pareto_front(points, directions))
            for model in sorted(points, key=lambda m: (points[m][0], m)):
                rows.append({"front": name, "landscape": landscape, "model": model, "x": points[model][0],
                             "y": points[model][1], "on_front": model in front})
    return pd.DataFrame(rows, columns=["front", "landscape", "model", "x", "y", "on_front"])


def bootstrap_reports(table: MetricTable, analysis, rng_seed: int, budget_cost: Optional[float],
                      jobs: int = 1, progress: bool = False) -> Dict[str, Any]:
    """ Naive and out-of-bag savings per landscape

    Landscapes with too few seeds get an "error" entry instead of a report.

    :param table: Metric table
    :param analysis: AnalysisConfig
    :param rng_seed: Seed
    :param budget_cost: Full-budget cost for relative savings
    :param jobs: Worker threads for the naive bootstrap
    :param progress: Show progress bars
    :return: {landscape: {"naive": ..., "out_of_bag": ...}}
    """
    reports: Dict[str, Any] = {}
    for landscape in table.landscapes:
        entry: Dict[str, Any] = {}
        try:
            entry["naive"] = bootstrap_naive(table, landscape, analysis.n_bootstrap, rng_seed, analysis.alpha,
                                             level=analysis.confidence_level, budget_cost=budget_cost, jobs=jobs,
                                             progress=progress).to_dict()
        except PreconditionError as err:
            logger.warning("%s: naive bootstrap skipped: %s", landscape, err)
            entry["naive"] = {"error": str(err)}
        try:
            entry["out_of_bag"] = bootstrap_oob(table, landscape, analysis.oob_rank_fraction, analysis.oob_cap,
                                                rng_seed, analysis.alpha, level=analysis.confidence_level,
                                                budget_cost=budget_cost).to_dict()
        except PreconditionError as err:
            logger.warning("%s: out-of-bag bootstrap skipped: %s", landscape, err)
            entry["out_of_bag"] = {"error": str(err)}
        reports[landscape] = entry
    return reports


def plot_curves(frame: pd.DataFrame, path: str, ylabel: str, top_models: Optional[Sequence[str]] = None) -> str:
    """ One panel per landscape of seed-averaged curves

    :param frame: Long frame from mean_payoff_curves or mean_delta_g_curve
    :param path: PNG file
    :param ylabel: Y axis label
    :param top_models: Models to draw, default all
    :return: path
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    landscapes = sorted(frame["landscape"].unique())
    fig, axes = plt.subplots(1, max(1, len(landscapes)), figsize=(5 * max(1, len(landscapes)), 4), squeeze=False)
    for axis, landscape in zip(axes[0], landscapes):
        subset = frame[frame["landscape"] == landscape]
        for model, rows in subset.groupby("model", sort=True):
            if top_models is not None and model not in top_models:
                continue
            axis.plot(rows["iteration"], rows["value"], marker="o", label=model)
        axis.set_title(landscape)
        axis.set_xlabel("iteration")
        axis.set_ylabel(ylabel)
    axes[0][0].legend(fontsize="x-small")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_pareto(frame: pd.DataFrame, path: str) -> str:
    """ Scatter of every front with its members highlighted

    :param frame: pareto_frame output
    :param path: PNG file
    :return: path
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = sorted(frame.groupby(["front", "landscape"]).groups)
    fig, axes = plt.subplots(1, max(1, len(panels)), figsize=(5 * max(1, len(panels)), 4), squeeze=False)
    for axis, (front, landscape) in zip(axes[0], panels):
        rows = frame[(frame["front"] == front) & (frame["landscape"] == landscape)]
        axis.scatter(rows["x"], rows["y"], color="grey", s=12)
        members = rows[rows["on_front"]]
        axis.plot(members["x"], members["y"], color="red", marker="o")
        axis.set_title("%s\n%s" % (landscape, front), fontsize="small")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def write_report(table: MetricTable, config, out_dir: str, config_digest: str,
                 profiles: Optional[Sequence[LandscapeProfile]] = None, charts: bool = False,
                 progress: bool = False) -> List[str]:
    """ Every report file of a metric table

    :param table: Metric table
    :param config: BenchmarkConfig
    :param out_dir: Output directory
    :param config_digest: Digest written in headers
    :param profiles: Landscape profiles for the property correlations
    :param charts: Also write PNG charts
    :param progress: Show progress bars
    :return: Written paths
    """
    header = header_lines(config_digest)
    analysis = config.analysis
    written = [write_frame(table.frame, os.path.join(out_dir, "metrics.csv"), header)]
    for metric in analysis.metrics:
        for stat in STATS:
            frame = rankings_frame(table, metric, stat, analysis.alpha, analysis.top)
            written.append(write_frame(frame, os.path.join(out_dir, "rankings", "%s_%s.csv" % (metric, stat)),
                                       header))
        try:
            agreement = rank_agreement_table(table, metric, analysis.alpha)
        except BenchmarkError as err:
            logger.warning("Rank agreement for %s skipped: %s", metric, err)
            continue
        written.append(write_frame(agreement, os.path.join(out_dir, "agreement_%s.csv" % metric), header))
        if profiles is not None:
            taus = dict(zip(agreement["landscape"], agreement["tau"]))
            try:
                correlation = agreement_property_correlation(taus, profiles)
                written.append(write_frame(correlation, os.path.join(out_dir, "agreement_properties_%s.csv" % metric),
                                           header))
            except PreconditionError as err:
                logger.info("Agreement/property correlation for %s skipped: %s", metric, err)

    campaign = config.campaign
    acquisitions = campaign.budget if config.cost.includes_seed else campaign.batch_size * campaign.n_cycles
    budget_cost = config.cost.unit_cost * acquisitions
    reports = bootstrap_reports(table, analysis, config.seed, budget_cost, config.jobs, progress)
    written.append(write_json(reports, os.path.join(out_dir, "bootstrap.json"), header))

    if profiles is not None:
        try:
            cells = property_correlations(profiles, table, analysis.n_bootstrap, config.seed, analysis.alpha,
                                          metrics=(FINAL_FITNESS,), level=analysis.confidence_level,
                                          jobs=config.jobs)
            frame = pd.DataFrame([cell.to_dict() for cell in cells])
            written.append(write_frame(frame, os.path.join(out_dir, "property_correlations.csv"), header))
        except PreconditionError as err:
            logger.info("Property correlations skipped: %s", err)

    pareto = pareto_frame(table, analysis.alpha)
    written.append(write_frame(pareto, os.path.join(out_dir, "pareto.csv"), header))
    payoff = mean_payoff_curves(table)
    delta = mean_delta_g_curve(table)
    written.append(write_frame(payoff, os.path.join(out_dir, "payoff_curves.csv"), header))
    written.append(write_frame(delta, os.path.join(out_dir, "delta_g_curves.csv"), header))

    if charts:
        common = models_in_every_landscape(table)
        top = list(rank_models(table, FINAL_FITNESS, "mean", ALL_SCOPE, analysis.alpha, common).top(
            analysis.top).models) + [BASELINE_ID] if common else None
        chart_dir = os.path.join(out_dir, "charts")
        os.makedirs(chart_dir, exist_ok=True)
        written.append(plot_curves(payoff, os.path.join(chart_dir, "payoff_curves.png"), "best fitness", top))
        written.append(plot_curves(delta, os.path.join(chart_dir, "delta_g_curves.png"), "Delta G", top))
        written.append(plot_pareto(pareto, os.path.join(chart_dir, "pareto.png")))
    logger.info("Report: %d file(s) written to %s", len(written), out_dir)
    return written
