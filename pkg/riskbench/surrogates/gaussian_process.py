"""
Module holds the exact Gaussian process surrogate and its deep-kernel variant

Hyperparameters (lengthscale, signal variance, noise variance) are fitted on standardized labels
by minimizing the negative log marginal likelihood with the schedule-free optimizer.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
import torch
from torch import nn

from riskbench.errors import CholeskyError, PreconditionError, TrainingDivergenceError
from riskbench.surrogates.base import DEEP_KERNEL_GP, GP, SurrogateSpec, TrainedSurrogate
from riskbench.surrogates.layers import DTYPE, FeedForward, TargetScaler, as_tensor, make_generator
from riskbench.surrogates.schedule_free import ScheduleFreeAdam

logger = logging.getLogger(__name__)

JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
INITIAL_NOISE = 0.1
_SQRT5 = math.sqrt(5.0)


def _squared_distances(left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
    sq = (left * left).sum(dim=1, keepdim=True) + (right * right).sum(dim=1) - 2.0 * left @ right.T
    return sq.clamp_min(0.0)


def kernel_matrix(left: torch.Tensor, right: torch.Tensor, kernel_type: str, lengthscale: torch.Tensor,
                  signal: torch.Tensor) -> torch.Tensor:
    """ Isotropic RBF or Matern-5/2 covariance

    :param left: n x D inputs
    :param right: m x D inputs
    :param kernel_type: "rbf" or "matern"
    :param lengthscale: Scalar lengthscale
    :param signal: Scalar signal variance
    :return: n x m covariance
    """
    sq = _squared_distances(left / lengthscale, right / lengthscale)
    if kernel_type == "rbf":
        return signal * torch.exp(-0.5 * sq)
    if kernel_type == "matern":
        # Clamping keeps the sqrt gradient finite at zero distance
        dist = torch.sqrt(sq.clamp_min(1e-30))
        return signal * (1.0 + _SQRT5 * dist + 5.0 / 3.0 * sq) * torch.exp(-_SQRT5 * dist)
    raise PreconditionError("unknown kernel %r" % kernel_type)


def robust_cholesky(matrix: torch.Tensor) -> Tuple[torch.Tensor, float]:
    """ Cholesky factor with jitter escalation 1e-8 .. 1e-4

    :param matrix: Symmetric n x n matrix
    :raises: CholeskyError if every jitter level fails
    :return: (lower factor, jitter used)
    """
    eye = torch.eye(matrix.shape[0], dtype=matrix.dtype)
    for jitter in JITTERS:
        factor, info = torch.linalg.cholesky_ex(matrix + jitter * eye)
        if int(info) == 0:
            if jitter > 0:
                logger.warning("Kernel matrix needed jitter %.0e to factorize", jitter)
            return factor, jitter
    raise CholeskyError("kernel matrix is not positive definite even with jitter %.0e" % JITTERS[-1])


class KernelHyperparameters(nn.Module):
    """
    Log-parameterized lengthscale, signal variance and noise variance
    """

    def __init__(self, lengthscale: float, signal: float, noise: float):
        super().__init__()
        self.log_lengthscale = nn.Parameter(torch.tensor(math.log(lengthscale), dtype=DTYPE))
        self.log_signal = nn.Parameter(torch.tensor(math.log(signal), dtype=DTYPE))
        self.log_noise = nn.Parameter(torch.tensor(math.log(noise), dtype=DTYPE))

    @property
    def lengthscale(self) -> torch.Tensor:
        return self.log_lengthscale.exp()

    @property
    def signal(self) -> torch.Tensor:
        return self.log_signal.exp()

    @property
    def noise(self) -> torch.Tensor:
        return self.log_noise.exp()


def negative_log_likelihood(features: torch.Tensor, targets: torch.Tensor, kernel_type: str,
                            params: KernelHyperparameters) -> torch.Tensor:
    """ Negative log marginal likelihood per data point

    :param features: n x D inputs (already mapped through a feature network if any)
    :param targets: n standardized targets
    :param kernel_type: Kernel family
    :param params: Kernel hyperparameters
    :return: Scalar tensor
    """
    n_rows = features.shape[0]
    covariance = kernel_matrix(features, features, kernel_type, params.lengthscale, params.signal)
    covariance = covariance + params.noise * torch.eye(n_rows, dtype=DTYPE)
    factor, _ = robust_cholesky(covariance)
    alpha = torch.cholesky_solve(targets.reshape(-1, 1), factor)
    fit = 0.5 * (targets.reshape(-1, 1) * alpha).sum()
    complexity = torch.log(torch.diagonal(factor)).sum()
    return (fit + complexity + 0.5 * n_rows * math.log(2.0 * math.pi)) / n_rows


class GaussianProcessSurrogate(TrainedSurrogate):
    """
    Exact GP posterior; with a feature network it becomes the deep-kernel GP

    Predictive variance includes the learned observation noise.
    """

    def __init__(self, spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, params: KernelHyperparameters,
                 scaler: TargetScaler, feature_net: Optional[FeedForward] = None):
        super().__init__(spec, X.shape[1])
        self.kernel_type = spec["kernel_type"]
        self.params = params
        self.scaler = scaler
        self.feature_net = feature_net
        with torch.no_grad():
            self._train_features = self._features(as_tensor(X))
            covariance = kernel_matrix(self._train_features, self._train_features, self.kernel_type,
                                       params.lengthscale, params.signal)
            covariance = covariance + params.noise * torch.eye(X.shape[0], dtype=DTYPE)
            self._factor, self.jitter = robust_cholesky(covariance)
            self._alpha = torch.cholesky_solve(as_tensor(scaler.transform(y)).reshape(-1, 1), self._factor)

    @staticmethod
    def from_hyperparameters(X: np.ndarray, y: np.ndarray, lengthscale: float, signal: float, noise: float,
                             kernel_type: str = "rbf") -> "GaussianProcessSurrogate":
        """ Posterior under fixed hyperparameters and a zero-mean prior on the raw labels

        :param X: n x D training inputs
        :param y: n labels, used as given
        :param lengthscale: Kernel lengthscale
        :param signal: Signal variance
        :param noise: Noise variance
        :param kernel_type: "rbf" or "matern"
        :return: GaussianProcessSurrogate
        """
        scaler = TargetScaler()
        params = KernelHyperparameters(lengthscale, signal, noise)
        spec = SurrogateSpec(GP, {"kernel_type": kernel_type})
        return GaussianProcessSurrogate(spec, np.asarray(X, dtype=float), np.asarray(y, dtype=float), params, scaler)

    @staticmethod
    def fit(spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, rng_seed: int) -> "GaussianProcessSurrogate":
        scaler = TargetScaler(y)
        inputs, targets = as_tensor(X), as_tensor(scaler.transform(y))
        feature_net = None
        feature_dim = X.shape[1]
        if spec.kind == DEEP_KERNEL_GP:
            hidden = int(spec["hidden_dim"])
            feature_net = FeedForward([X.shape[1], hidden, hidden, hidden], make_generator(rng_seed))
            feature_dim = hidden
        params = KernelHyperparameters(math.sqrt(feature_dim), 1.0, INITIAL_NOISE)
        modules = nn.ModuleList([params] if feature_net is None else [params, feature_net])
        optimizer = ScheduleFreeAdam(modules.parameters(), lr=spec["learning_rate"])
        for iteration in range(int(spec["gp_iterations"])):
            optimizer.zero_grad()
            features = inputs if feature_net is None else feature_net(inputs)
            loss = negative_log_likelihood(features, targets, spec["kernel_type"], params)
            if not bool(torch.isfinite(loss)):
                raise TrainingDivergenceError("marginal likelihood became %s" % loss.item(), epoch=iteration)
            loss.backward()
            optimizer.step()
        optimizer.eval()
        logger.debug("GP fit: lengthscale %.4g, signal %.4g, noise %.4g", params.lengthscale.item(),
                     params.signal.item(), params.noise.item())
        return GaussianProcessSurrogate(spec, X, y, params, scaler, feature_net)

    @property
    def noise_std(self) -> float:
        """ Observation noise standard deviation in label units

        :return: Noise std
        """
        return float(math.sqrt(self.params.noise.item()) * self.scaler.scale)

    def _features(self, inputs: torch.Tensor) -> torch.Tensor:
        return inputs if self.feature_net is None else self.feature_net(inputs)

    @torch.no_grad()
    def _predict(self, X: np.ndarray):
        features = self._features(as_tensor(X))
        cross = kernel_matrix(features, self._train_features, self.kernel_type, self.params.lengthscale,
                              self.params.signal)
        mean = (cross @ self._alpha).reshape(-1)
        solved = torch.linalg.solve_triangular(self._factor, cross.T, upper=False)
        variance = self.params.signal + self.params.noise - (solved * solved).sum(dim=0)
        std = variance.clamp_min(0.0).sqrt()
        return self.scaler.inverse_mean(mean.numpy()), self.scaler.inverse_std(std.numpy())
