"""
Module holds the surrogate contract: hyperparameter specs and grids, posterior predictions,
and the base class every trained surrogate implements
"""
import itertools
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping

import numpy as np

from riskbench.errors import SchemaError, ShapeError, TrainingDivergenceError

RANDOM_FOREST = "random_forest"
GP = "gp"
DEEP_KERNEL_GP = "deep_kernel_gp"
BNN = "bnn"
DROPOUT_NN = "dropout_nn"
ENSEMBLE_NN = "ensemble_nn"
SURROGATE_KINDS = (RANDOM_FOREST, GP, DEEP_KERNEL_GP, BNN, DROPOUT_NN, ENSEMBLE_NN)
# Kinds fitted on standardized inputs; the random forest sees raw encodings
STANDARDIZED_KINDS = frozenset((GP, DEEP_KERNEL_GP, BNN, DROPOUT_NN, ENSEMBLE_NN))
NEURAL_KINDS = frozenset((BNN, DROPOUT_NN, ENSEMBLE_NN))

LEARNING_RATES = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1)
KERNELS = ("rbf", "matern")

# Tunable keys and their admissible values, in enumeration order
GRIDS: Dict[str, Dict[str, tuple]] = {
    RANDOM_FOREST: {"n_estimators": (10, 50, 100, 200), "max_depth": (None, 10)},
    GP: {"kernel_type": KERNELS, "learning_rate": LEARNING_RATES},
    DEEP_KERNEL_GP: {"kernel_type": KERNELS, "learning_rate": LEARNING_RATES},
    BNN: {"learning_rate": LEARNING_RATES},
    DROPOUT_NN: {"learning_rate": LEARNING_RATES},
    ENSEMBLE_NN: {"learning_rate": LEARNING_RATES},
}

# Architecture keys: published values, any positive override accepted
_NEURAL_FIXED = {"hidden_dim": 128, "epochs": 100, "batch_size": 32}
FIXED: Dict[str, Dict[str, Any]] = {
    RANDOM_FOREST: {},
    GP: {"gp_iterations": 100},
    DEEP_KERNEL_GP: {"hidden_dim": 128, "gp_iterations": 100},
    BNN: {**_NEURAL_FIXED, "kl_weight": 1.0, "mc_samples": 30},
    DROPOUT_NN: {**_NEURAL_FIXED, "dropout": 0.1, "mc_samples": 30},
    ENSEMBLE_NN: {**_NEURAL_FIXED, "n_estimators": 5},
}

# Values used when a tunable key is left unspecified
DEFAULT_TUNABLE: Dict[str, Dict[str, Any]] = {
    RANDOM_FOREST: {"n_estimators": 100, "max_depth": None},
    GP: {"kernel_type": "rbf", "learning_rate": 1e-1},
    DEEP_KERNEL_GP: {"kernel_type": "rbf", "learning_rate": 1e-2},
    BNN: {"learning_rate": 1e-2},
    DROPOUT_NN: {"learning_rate": 1e-2},
    ENSEMBLE_NN: {"learning_rate": 1e-2},
}


@dataclass(frozen=True)
class SurrogateSpec:
    """ A surrogate kind with its full hyperparameter map

    Unspecified keys are filled with defaults; tunable keys must lie on the grid.
    """
    kind: str
    hyperparams: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise SchemaError("unknown surrogate kind %r, expected one of %s" % (self.kind, SURROGATE_KINDS))
        grid, fixed = GRIDS[self.kind], FIXED[self.kind]
        unknown = set(self.hyperparams).difference(grid).difference(fixed)
        if unknown:
            raise SchemaError("unknown hyperparameter(s) for %s: %s" % (self.kind, ", ".join(sorted(unknown))))
        merged = {**DEFAULT_TUNABLE[self.kind], **fixed, **self.hyperparams}
        for key, allowed in grid.items():
            if merged[key] not in allowed:
                raise SchemaError("%s=%r is off the %s grid %s" % (key, merged[key], self.kind, allowed))
        for key in fixed:
            value = merged[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise SchemaError("%s must be a positive number, got %r" % (key, value))
        if self.kind == DROPOUT_NN and not merged["dropout"] < 1:
            raise SchemaError("dropout must be below 1")
        object.__setattr__(self, "hyperparams", dict(sorted(merged.items())))

    def __getitem__(self, key: str) -> Any:
        return self.hyperparams[key]

    def __hash__(self) -> int:
        return hash((self.kind, json.dumps(self.hyperparams, sort_keys=True)))

    def to_dict(self) -> Dict[str, Any]:
        """ JSON-ready form

        :return: {"kind", "hyperparams"}
        """
        return {"kind": self.kind, "hyperparams": dict(self.hyperparams)}

    @staticmethod
    def from_dict(data: Mapping[str, Any]) -> "SurrogateSpec":
        """ Inverse of to_dict

        :param data: Mapping with kind and hyperparams
        :return: SurrogateSpec
        """
        return SurrogateSpec(kind=data["kind"], hyperparams=dict(data.get("hyperparams", {})))


def grid_specs(kind: str, **overrides: Any) -> List[SurrogateSpec]:
    """ Every grid point of a kind, in enumeration order

    :param kind: Surrogate kind
    :param overrides: Architecture keys applied to every point
    :return: List of SurrogateSpec
    """
    grid = GRIDS[kind]
    keys = list(grid)
    return [SurrogateSpec(kind, {**dict(zip(keys, values)), **overrides})
            for values in itertools.product(*(grid[key] for key in keys))]


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    """ Predictive mean and standard deviation per candidate

    """
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        std = np.asarray(self.std, dtype=float).reshape(-1)
        if mean.shape != std.shape:
            raise ShapeError("mean has %d entries but std has %d" % (mean.size, std.size))
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise TrainingDivergenceError("posterior contains non-finite values")
        if np.any(std < 0):
            raise TrainingDivergenceError("posterior std must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def __len__(self) -> int:
        return self.mean.size


class TrainedSurrogate(ABC):
    """
    A fitted surrogate; immutable after training and safe to share read-only
    """

    def __init__(self, spec: SurrogateSpec, input_dim: int):
        self.spec = spec
        self.input_dim = input_dim

    def predict(self, X: np.ndarray) -> PosteriorPrediction:
        """ Posterior mean and std at the given encoding rows

        :param X: n x D encoding rows
        :raises: ShapeError if D differs from the training dimension
        :return: PosteriorPrediction
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError("expected rows of dimension %d, got shape %s" % (self.input_dim, X.shape))
        if X.shape[0] == 0:
            return PosteriorPrediction(np.zeros(0), np.zeros(0))
        mean, std = self._predict(X)
        return PosteriorPrediction(mean, np.maximum(std, 0.0))

    @abstractmethod
    def _predict(self, X: np.ndarray):
        """ Kind-specific prediction on validated rows

        :param X: n x D rows
        :return: (mean, std) arrays
        """
