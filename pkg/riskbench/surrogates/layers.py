"""
Module has the torch building blocks shared by the neural and deep-kernel surrogates

All randomness goes through explicit torch.Generator objects, never the global torch RNG, so
concurrent training calls stay reproducible.
"""
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from riskbench.errors import TrainingDivergenceError
from riskbench.surrogates.base import SurrogateSpec
from riskbench.surrogates.schedule_free import ScheduleFreeAdam

DTYPE = torch.float64


def make_generator(seed: int) -> torch.Generator:
    """ CPU generator seeded from an arbitrary nonnegative integer

    :param seed: Seed
    :return: torch.Generator
    """
    generator = torch.Generator()
    generator.manual_seed(int(seed) % (2 ** 63))
    return generator


def sub_seeds(seed: int, count: int) -> List[int]:
    """ Independent child seeds

    :param seed: Parent seed
    :param count: Number of children
    :return: List of 63-bit seeds
    """
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(child.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1)) for child in children]


def as_tensor(values: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.ascontiguousarray(values, dtype=np.float64), dtype=DTYPE)


@torch.no_grad()
def init_linear_(layer: nn.Linear, generator: torch.Generator):
    """ Uniform fan-in initialization drawn from the given generator

    :param layer: Layer to reset in place
    :param generator: Source of randomness
    """
    bound = 1.0 / math.sqrt(layer.in_features)
    layer.weight.uniform_(-bound, bound, generator=generator)
    layer.bias.uniform_(-bound, bound, generator=generator)


def seeded_linear(in_features: int, out_features: int, generator: torch.Generator) -> nn.Linear:
    layer = nn.Linear(in_features, out_features, dtype=DTYPE)
    init_linear_(layer, generator)
    return layer


class FeedForward(nn.Module):
    """
    Linear-ReLU stack with optional dropout after every hidden activation

    Dropout masks are passed in explicitly: per element during training, or one mask per hidden
    unit shared by every row during Monte-Carlo prediction.
    """

    def __init__(self, widths: List[int], generator: torch.Generator, dropout: float = 0.0,
                 final_activation: bool = False):
        super().__init__()
        self.layers = nn.ModuleList(seeded_linear(w_in, w_out, generator)
                                    for w_in, w_out in zip(widths[:-1], widths[1:]))
        self.dropout = dropout
        self.final_activation = final_activation

    @property
    def hidden_widths(self) -> List[int]:
        return [layer.out_features for layer in self.layers[:-1]]

    def forward(self, inputs: torch.Tensor, masks: Optional[List[torch.Tensor]] = None) -> torch.Tensor:
        hidden = inputs
        last = len(self.layers) - 1
        for depth, layer in enumerate(self.layers):
            hidden = layer(hidden)
            if depth < last or self.final_activation:
                hidden = torch.relu(hidden)
            if depth < last and masks is not None:
                hidden = hidden * masks[depth]
        return hidden

    def training_masks(self, rows: int, generator: torch.Generator) -> Optional[List[torch.Tensor]]:
        """ Inverted-dropout masks, one value per element

        :param rows: Batch size
        :param generator: Source of randomness
        :return: List of masks or None without dropout
        """
        if self.dropout <= 0:
            return None
        return [self._mask((rows, width), generator) for width in self.hidden_widths]

    def sample_masks(self, generator: torch.Generator) -> Optional[List[torch.Tensor]]:
        """ Inverted-dropout masks, one value per hidden unit

        :param generator: Source of randomness
        :return: List of (1, width) masks or None without dropout
        """
        if self.dropout <= 0:
            return None
        return [self._mask((1, width), generator) for width in self.hidden_widths]

    def _mask(self, shape: Tuple[int, int], generator: torch.Generator) -> torch.Tensor:
        keep = torch.rand(shape, generator=generator, dtype=DTYPE) >= self.dropout
        return keep.to(DTYPE) / (1.0 - self.dropout)


class TargetScaler:
    """
    Standardizes labels for fitting and maps predictions back
    """

    def __init__(self, y: Optional[np.ndarray] = None):
        if y is None:
            self.mean, self.scale = 0.0, 1.0
            return
        y = np.asarray(y, dtype=float)
        self.mean = float(y.mean())
        scale = float(y.std())
        self.scale = scale if scale > 0 else 1.0

    def transform(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.mean) / self.scale

    def inverse_mean(self, mean: np.ndarray) -> np.ndarray:
        return np.asarray(mean, dtype=float) * self.scale + self.mean

    def inverse_std(self, std: np.ndarray) -> np.ndarray:
        return np.asarray(std, dtype=float) * self.scale


def fit_minibatch(module: nn.Module, X: torch.Tensor, y: torch.Tensor, spec: SurrogateSpec,
                  generator: torch.Generator, loss_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor]):
    """ Mini-batch training loop with the schedule-free optimizer

    Runs exactly spec["epochs"] passes over shuffled batches of spec["batch_size"] rows and leaves
    the averaged iterate loaded in the module.

    :param module: Model to fit in place
    :param X: n x D inputs
    :param y: n standardized targets
    :param spec: Surrogate spec providing epochs, batch_size and learning_rate
    :param generator: Shuffle (and dropout/noise) randomness
    :param loss_fn: Callable (X batch, y batch) -> scalar loss
    :raises: TrainingDivergenceError carrying the epoch at which the loss stopped being finite
    """
    optimizer = ScheduleFreeAdam(module.parameters(), lr=spec["learning_rate"])
    n_rows = X.shape[0]
    batch_size = int(spec["batch_size"])
    module.train()
    for epoch in range(int(spec["epochs"])):
        order = torch.randperm(n_rows, generator=generator)
        for start in range(0, n_rows, batch_size):
            batch = order[start:start + batch_size]
            optimizer.zero_grad()
            loss = loss_fn(X[batch], y[batch])
            if not bool(torch.isfinite(loss)):
                raise TrainingDivergenceError("loss became %s" % loss.item(), epoch=epoch)
            loss.backward()
            optimizer.step()
    optimizer.eval()
    module.eval()
