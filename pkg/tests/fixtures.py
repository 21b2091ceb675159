"""
Small landscapes and records shared by the test modules
"""
import os
import tempfile
from typing import Dict, Sequence

import numpy as np
import pandas as pd

from riskbench.landscape_store import Landscape, SyntheticSpec, generate_synthetic
from riskbench.metrics import COLUMNS, MetricTable
from riskbench.surrogates import SurrogateSpec
from riskbench.surrogates.base import BNN, DEEP_KERNEL_GP, DROPOUT_NN, ENSEMBLE_NN, GP, RANDOM_FOREST

SLOW = os.environ.get("RISKBENCH_SLOW") == "1"
GB1_CSV = os.environ.get("RISKBENCH_GB1_CSV")

# Desk-scale architecture overrides, one spec per surrogate kind
FAST_SPECS: Dict[str, SurrogateSpec] = {
    RANDOM_FOREST: SurrogateSpec(RANDOM_FOREST, {"n_estimators": 10}),
    GP: SurrogateSpec(GP, {"gp_iterations": 20}),
    DEEP_KERNEL_GP: SurrogateSpec(DEEP_KERNEL_GP, {"hidden_dim": 8, "gp_iterations": 10}),
    BNN: SurrogateSpec(BNN, {"hidden_dim": 8, "epochs": 3, "batch_size": 8, "mc_samples": 5}),
    DROPOUT_NN: SurrogateSpec(DROPOUT_NN, {"hidden_dim": 8, "epochs": 3, "batch_size": 8, "mc_samples": 5}),
    ENSEMBLE_NN: SurrogateSpec(ENSEMBLE_NN, {"hidden_dim": 8, "epochs": 3, "batch_size": 8, "n_estimators": 2}),
}


def additive(length: int = 3, alphabet_size: int = 4, seed: int = 0, name: str = None) -> Landscape:
    return generate_synthetic(SyntheticSpec("additive", length, alphabet_size, seed=seed, name=name))


def nk(length: int = 4, alphabet_size: int = 3, k: int = 2, seed: int = 0) -> Landscape:
    return generate_synthetic(SyntheticSpec("nk", length, alphabet_size, k=k, seed=seed))


def write_csv(lines: Sequence[str]) -> str:
    """ Temporary CSV holding the given lines

    :param lines: File lines without newlines
    :return: Path; the caller removes it
    """
    handle, path = tempfile.mkstemp(suffix=".csv")
    with os.fdopen(handle, "w", encoding="utf-8") as stream:
        stream.write("\n".join(lines) + "\n")
    return path


def metric_table(values: Dict[str, Sequence[float]], landscape: str = "toy",
                 costs: Dict[str, Sequence[float]] = None) -> MetricTable:
    """ Metric table with one row per (model, seed) from per-model final fitness values

    :param values: Model id mapped to final fitness per seed
    :param landscape: Landscape name
    :param costs: Model id mapped to cost per seed, default 100 * (1 - fitness)
    :return: MetricTable
    """
    rows = []
    for model, series in values.items():
        model_costs = costs[model] if costs is not None else [100.0 * (1.0 - v) for v in series]
        for seed, (value, cost) in enumerate(zip(series, model_costs)):
            rows.append((model, landscape, seed, float(value), float(value), float(cost), False, 1))
    return MetricTable(pd.DataFrame(rows, columns=list(COLUMNS)))


def multi_landscape_table(per_landscape: Dict[str, Dict[str, Sequence[float]]]) -> MetricTable:
    frames = [metric_table(values, landscape).frame for landscape, values in per_landscape.items()]
    return MetricTable(pd.concat(frames, ignore_index=True))


def rng_values(seed: int, size: int) -> np.ndarray:
    return np.random.default_rng(seed).random(size)
