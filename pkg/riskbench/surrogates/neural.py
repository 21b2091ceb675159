"""
Module holds the neural surrogates: Monte-Carlo dropout MLP, deep ensemble and mean-field
Bayesian network
"""
import math
from typing import List, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from riskbench.surrogates.base import SurrogateSpec, TrainedSurrogate
from riskbench.surrogates.layers import (DTYPE, FeedForward, TargetScaler, as_tensor, fit_minibatch, make_generator,
                                         sub_seeds)

# Initial posterior std of every BNN weight is softplus(RHO_INIT)
RHO_INIT = -5.0
# Stream offset separating prediction-time randomness from training randomness
_PREDICT_STREAM = 7919


def _widths(input_dim: int, spec: SurrogateSpec) -> List[int]:
    hidden = int(spec["hidden_dim"])
    return [input_dim, hidden, hidden, 1]


def _mse(module_output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return F.mse_loss(module_output.reshape(-1), target)


class DropoutSurrogate(TrainedSurrogate):
    """
    MLP trained with dropout and kept stochastic at prediction time
    """

    def __init__(self, spec: SurrogateSpec, network: FeedForward, scaler: TargetScaler, rng_seed: int):
        super().__init__(spec, network.layers[0].in_features)
        self.network = network
        self.scaler = scaler
        self.rng_seed = rng_seed

    @staticmethod
    def fit(spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, rng_seed: int) -> "DropoutSurrogate":
        generator = make_generator(rng_seed)
        network = FeedForward(_widths(X.shape[1], spec), generator, dropout=float(spec["dropout"]))
        scaler = TargetScaler(y)

        def loss_fn(inputs, targets):
            return _mse(network(inputs, network.training_masks(inputs.shape[0], generator)), targets)

        fit_minibatch(network, as_tensor(X), as_tensor(scaler.transform(y)), spec, generator, loss_fn)
        return DropoutSurrogate(spec, network, scaler, rng_seed)

    @torch.no_grad()
    def _predict(self, X: np.ndarray):
        generator = make_generator(self.rng_seed + _PREDICT_STREAM)
        inputs = as_tensor(X)
        samples = torch.stack([self.network(inputs, self.network.sample_masks(generator)).reshape(-1)
                               for _ in range(int(self.spec["mc_samples"]))])
        samples = samples.numpy()
        return self.scaler.inverse_mean(samples.mean(axis=0)), self.scaler.inverse_std(samples.std(axis=0))


class EnsembleSurrogate(TrainedSurrogate):
    """
    Independently initialized MLPs; disagreement between members is the uncertainty
    """

    def __init__(self, spec: SurrogateSpec, members: Sequence[FeedForward], scaler: TargetScaler):
        super().__init__(spec, members[0].layers[0].in_features)
        self.members = list(members)
        self.scaler = scaler

    @staticmethod
    def fit(spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, rng_seed: int) -> "EnsembleSurrogate":
        scaler = TargetScaler(y)
        inputs, targets = as_tensor(X), as_tensor(scaler.transform(y))
        members = []
        for member_seed in sub_seeds(rng_seed, int(spec["n_estimators"])):
            generator = make_generator(member_seed)
            network = FeedForward(_widths(X.shape[1], spec), generator)

            def loss_fn(batch_x, batch_y, network=network):
                return _mse(network(batch_x), batch_y)

            fit_minibatch(network, inputs, targets, spec, generator, loss_fn)
            members.append(network)
        return EnsembleSurrogate(spec, members, scaler)

    @torch.no_grad()
    def _predict(self, X: np.ndarray):
        inputs = as_tensor(X)
        outputs = torch.stack([member(inputs).reshape(-1) for member in self.members]).numpy()
        return self.scaler.inverse_mean(outputs.mean(axis=0)), self.scaler.inverse_std(outputs.std(axis=0))


class BayesianLinear(nn.Module):
    """
    Linear layer with a factorized Gaussian posterior over weights and biases
    """

    def __init__(self, in_features: int, out_features: int, generator: torch.Generator):
        super().__init__()
        bound = 1.0 / math.sqrt(in_features)
        self.weight_mu = nn.Parameter(torch.empty(out_features, in_features, dtype=DTYPE)
                                      .uniform_(-bound, bound, generator=generator))
        self.bias_mu = nn.Parameter(torch.empty(out_features, dtype=DTYPE).uniform_(-bound, bound, generator=generator))
        self.weight_rho = nn.Parameter(torch.full((out_features, in_features), RHO_INIT, dtype=DTYPE))
        self.bias_rho = nn.Parameter(torch.full((out_features,), RHO_INIT, dtype=DTYPE))

    def forward(self, inputs: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        weight_sigma = F.softplus(self.weight_rho)
        bias_sigma = F.softplus(self.bias_rho)
        weight = self.weight_mu + weight_sigma * torch.randn(self.weight_mu.shape, generator=generator, dtype=DTYPE)
        bias = self.bias_mu + bias_sigma * torch.randn(self.bias_mu.shape, generator=generator, dtype=DTYPE)
        return F.linear(inputs, weight, bias)

    def kl_divergence(self) -> torch.Tensor:
        """ KL from the posterior to a standard normal prior

        :return: Scalar tensor
        """
        total = torch.zeros((), dtype=DTYPE)
        for mu, rho in ((self.weight_mu, self.weight_rho), (self.bias_mu, self.bias_rho)):
            sigma = F.softplus(rho)
            total = total + (-torch.log(sigma) + 0.5 * (sigma * sigma + mu * mu) - 0.5).sum()
        return total


class BayesianNetwork(nn.Module):
    """
    Three Bayesian layers with ReLU activations; every forward pass samples one weight set
    """

    def __init__(self, widths: List[int], generator: torch.Generator):
        super().__init__()
        self.layers = nn.ModuleList(BayesianLinear(w_in, w_out, generator)
                                    for w_in, w_out in zip(widths[:-1], widths[1:]))

    def forward(self, inputs: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        hidden = inputs
        for depth, layer in enumerate(self.layers):
            hidden = layer(hidden, generator)
            if depth < len(self.layers) - 1:
                hidden = torch.relu(hidden)
        return hidden

    def kl_divergence(self) -> torch.Tensor:
        return sum((layer.kl_divergence() for layer in self.layers), torch.zeros((), dtype=DTYPE))


class BayesianSurrogate(TrainedSurrogate):
    """
    Mean-field variational network trained with the reparameterization estimator
    """

    def __init__(self, spec: SurrogateSpec, network: BayesianNetwork, scaler: TargetScaler, rng_seed: int):
        super().__init__(spec, network.layers[0].weight_mu.shape[1])
        self.network = network
        self.scaler = scaler
        self.rng_seed = rng_seed

    @staticmethod
    def fit(spec: SurrogateSpec, X: np.ndarray, y: np.ndarray, rng_seed: int) -> "BayesianSurrogate":
        generator = make_generator(rng_seed)
        network = BayesianNetwork(_widths(X.shape[1], spec), generator)
        scaler = TargetScaler(y)
        n_train = X.shape[0]
        kl_weight = float(spec["kl_weight"])

        def loss_fn(inputs, targets):
            fit = _mse(network(inputs, generator), targets)
            return fit + kl_weight * network.kl_divergence() / n_train

        fit_minibatch(network, as_tensor(X), as_tensor(scaler.transform(y)), spec, generator, loss_fn)
        return BayesianSurrogate(spec, network, scaler, rng_seed)

    @torch.no_grad()
    def _predict(self, X: np.ndarray):
        generator = make_generator(self.rng_seed + _PREDICT_STREAM)
        inputs = as_tensor(X)
        samples = torch.stack([self.network(inputs, generator).reshape(-1)
                               for _ in range(int(self.spec["mc_samples"]))]).numpy()
        return self.scaler.inverse_mean(samples.mean(axis=0)), self.scaler.inverse_std(samples.std(axis=0))
