"""
Module dispatches train/predict calls to the surrogate families
"""
from typing import Callable, Dict, Sequence

import numpy as np

from riskbench.encodings import EncodingMatrix, standardize
from riskbench.errors import ShapeError
from riskbench.surrogates.base import (BNN, DEEP_KERNEL_GP, DROPOUT_NN, ENSEMBLE_NN, GP, RANDOM_FOREST,
                                       STANDARDIZED_KINDS, PosteriorPrediction, SurrogateSpec, TrainedSurrogate)
from riskbench.surrogates.forest import ForestSurrogate
from riskbench.surrogates.gaussian_process import GaussianProcessSurrogate
from riskbench.surrogates.neural import BayesianSurrogate, DropoutSurrogate, EnsembleSurrogate
from riskbench.validation import ArgumentChecker

TRAINERS: Dict[str, Callable[[SurrogateSpec, np.ndarray, np.ndarray, int], TrainedSurrogate]] = {
    RANDOM_FOREST: ForestSurrogate.fit,
    GP: GaussianProcessSurrogate.fit,
    DEEP_KERNEL_GP: GaussianProcessSurrogate.fit,
    BNN: BayesianSurrogate.fit,
    DROPOUT_NN: DropoutSurrogate.fit,
    ENSEMBLE_NN: EnsembleSurrogate.fit,
}


@ArgumentChecker(y="finite")
def train(spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, rng_seed: int) -> TrainedSurrogate:
    """ Fit a surrogate of the given spec

    Deterministic given (spec, X, y, rng_seed). Labels are standardized internally; inputs are
    used as given.

    :param spec: Surrogate kind and hyperparameters
    :param X: n x D encoding rows
    :param y: n labels
    :param rng_seed: Seed for initialization, shuffling and sampling
    :raises: ShapeError for mismatched or too few rows, TrainingDivergenceError for non-finite losses
    :return: TrainedSurrogate
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError("X of shape %s does not match %d labels" % (X.shape, y.size))
    if y.size < 2:
        raise ShapeError("training needs at least 2 rows, got %d" % y.size)
    return TRAINERS[spec.kind](spec, X, y, int(rng_seed))


def predict(model: TrainedSurrogate, X: np.ndarray) -> PosteriorPrediction:
    """ Posterior mean and std at the given rows

    :param model: Trained surrogate
    :param X: n x D encoding rows
    :raises: ShapeError for a dimension mismatch
    :return: PosteriorPrediction
    """
    return model.predict(X)


def prepare_encoding(kind: str, encoding: EncodingMatrix, fit_rows: Sequence[int]) -> EncodingMatrix:
    """ Inputs as seen by a surrogate kind

    Every kind except the random forest is fed encodings z-scored with statistics of the rows it
    is fitted on.

    :param kind: Surrogate kind
    :param encoding: Landscape encoding
    :param fit_rows: Landscape indices of the training rows
    :return: EncodingMatrix
    """
    if kind in STANDARDIZED_KINDS:
        return standardize(encoding, fit_rows)
    return encoding
