"""
Uncertainty-aware regressors behind a uniform train/predict contract
"""
from riskbench.surrogates.base import (GRIDS, NEURAL_KINDS, STANDARDIZED_KINDS, SURROGATE_KINDS, PosteriorPrediction,
                                       SurrogateSpec, TrainedSurrogate, grid_specs)
from riskbench.surrogates.grid_search import GridSearchCache, grid_search
from riskbench.surrogates.schedule_free import OptimizerState, ScheduleFreeAdam, schedule_free_step
from riskbench.surrogates.training import predict, prepare_encoding, train

__all__ = ["GRIDS", "NEURAL_KINDS", "STANDARDIZED_KINDS", "SURROGATE_KINDS", "PosteriorPrediction", "SurrogateSpec",
           "TrainedSurrogate", "grid_specs", "GridSearchCache", "grid_search", "OptimizerState", "ScheduleFreeAdam",
           "schedule_free_step", "predict", "prepare_encoding", "train"]
