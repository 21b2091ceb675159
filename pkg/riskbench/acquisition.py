"""
Module scores unacquired candidates from a surrogate posterior and selects the next batch
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from riskbench.errors import PoolSizeError, SchemaError
from riskbench.surrogates import PosteriorPrediction
from riskbench.validation import ArgumentChecker

EI = "ei"
UCB = "ucb"
THOMPSON = "thompson"
GREEDY = "greedy"
ACQUISITION_KINDS = (EI, UCB, THOMPSON, GREEDY)

DEFAULT_XI = 0.01
DEFAULT_BETA = 2.0


@dataclass(frozen=True)
class AcquisitionSpec:
    """ Acquisition rule with its parameters

    xi is the EI improvement margin, beta the UCB exploration weight. rng_seed is an offset
    mixed into the per-cycle Thompson seed.
    """
    kind: str
    xi: float = DEFAULT_XI
    beta: float = DEFAULT_BETA
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ACQUISITION_KINDS:
            raise SchemaError("unknown acquisition %r, expected one of %s" % (self.kind, ACQUISITION_KINDS))
        if not (self.xi >= 0 and self.beta >= 0):
            raise SchemaError("xi and beta must be nonnegative")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "xi": self.xi, "beta": self.beta, "rng_seed": self.rng_seed}

    @staticmethod
    def from_dict(data: dict) -> "AcquisitionSpec":
        return AcquisitionSpec(kind=data["kind"], xi=data.get("xi", DEFAULT_XI), beta=data.get("beta", DEFAULT_BETA),
                               rng_seed=data.get("rng_seed", 0))


@ArgumentChecker(xi="nonnegative")
def score_ei(pred: PosteriorPrediction, f_star: float, xi: float = DEFAULT_XI) -> np.ndarray:
    """ Expected improvement over f_star + xi

    :param pred: Posterior
    :param f_star: Best observed label
    :param xi: Improvement margin
    :return: Nonnegative scores
    """
    improvement = pred.mean - f_star - xi
    scores = np.maximum(improvement, 0.0)
    positive = pred.std > 0
    if np.any(positive):
        sigma = pred.std[positive]
        z = improvement[positive] / sigma
        scores[positive] = improvement[positive] * norm.cdf(z) + sigma * norm.pdf(z)
    return np.maximum(scores, 0.0)


@ArgumentChecker(beta="nonnegative")
def score_ucb(pred: PosteriorPrediction, beta: float = DEFAULT_BETA) -> np.ndarray:
    """ Upper confidence bound mu + beta * sigma

    :param pred: Posterior
    :param beta: Exploration weight
    :return: Scores
    """
    return pred.mean + beta * pred.std


def sample_thompson(pred: PosteriorPrediction, rng_seed: int) -> np.ndarray:
    """ One joint draw from the independent normal marginals

    :param pred: Posterior
    :param rng_seed: Seed
    :return: Scores
    """
    noise = np.random.default_rng(rng_seed).standard_normal(len(pred))
    return pred.mean + pred.std * noise


def score_greedy(pred: PosteriorPrediction) -> np.ndarray:
    """ Posterior mean

    :param pred: Posterior
    :return: Scores
    """
    return pred.mean.copy()


def score(spec: AcquisitionSpec, pred: PosteriorPrediction, f_star: float,
          rng_seed: Optional[int] = None) -> np.ndarray:
    """ Dispatch to the scoring rule of a spec

    :param spec: Acquisition spec
    :param pred: Posterior
    :param f_star: Best observed label (EI only)
    :param rng_seed: Thompson seed, defaults to spec.rng_seed
    :return: Scores
    """
    if spec.kind == EI:
        return score_ei(pred, f_star, spec.xi)
    if spec.kind == UCB:
        return score_ucb(pred, spec.beta)
    if spec.kind == THOMPSON:
        return sample_thompson(pred, spec.rng_seed if rng_seed is None else rng_seed)
    return score_greedy(pred)


@ArgumentChecker(batch_size="positive_int")
def select_batch(scores: np.ndarray, batch_size: int, tie_seed: int) -> np.ndarray:
    """ Indices of the batch_size highest scores

    Exact ties are broken uniformly at random under tie_seed.

    :param scores: One score per candidate
    :param batch_size: Number of indices b
    :param tie_seed: Seed for tie breaking
    :raises: PoolSizeError if b exceeds the number of candidates
    :return: Candidate indices, best first
    """
    scores = np.asarray(scores, dtype=float)
    if batch_size > scores.size:
        raise PoolSizeError("batch of %d exceeds %d candidates" % (batch_size, scores.size))
    tie_keys = np.random.default_rng(tie_seed).random(scores.size)
    # lexsort sorts by the last key first
    order = np.lexsort((tie_keys, -scores))
    return order[:batch_size]
