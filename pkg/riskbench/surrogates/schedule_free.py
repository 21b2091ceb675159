"""
Module holds the schedule-free variant of Adam used by every iterative surrogate

Gradients are taken at an interpolation point between the base iterate z and its running
average x; the running average is the point used for evaluation.
"""
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import torch

from riskbench.errors import OptimizerError, PreconditionError, ShapeError


@dataclass(frozen=True)
class OptimizerState:
    """ Buffers of one parameter group

    z: base iterates, x: averaged iterates, v: second-moment estimates. Each base iterate enters
    the average with weight proportional to the squared peak learning rate reached so far, so
    warm-up steps count for little.
    """
    z: Tuple[torch.Tensor, ...]
    x: Tuple[torch.Tensor, ...]
    v: Tuple[torch.Tensor, ...]
    step: int = 0
    learning_rate: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.99)
    eps: float = 1e-8
    warmup_steps: int = 0
    peak_rate: float = 0.0
    weight_sum: float = 0.0

    @staticmethod
    def initial(params: Iterable[torch.Tensor], learning_rate: float = 1e-3,
                betas: Tuple[float, float] = (0.9, 0.99), eps: float = 1e-8,
                warmup_steps: int = 0) -> "OptimizerState":
        """ State whose iterates all start at the current parameter values

        :param params: Parameters
        :param learning_rate: Step size
        :param betas: (interpolation weight, second-moment decay)
        :param eps: Denominator floor
        :param warmup_steps: Steps of linear learning-rate warm-up
        :return: OptimizerState at step 0
        """
        params = [p.detach() for p in params]
        return OptimizerState(z=tuple(p.clone() for p in params), x=tuple(p.clone() for p in params),
                              v=tuple(torch.zeros_like(p) for p in params), step=0,
                              learning_rate=learning_rate, betas=tuple(betas), eps=eps, warmup_steps=warmup_steps)

    def rate(self, step: int) -> float:
        """ Learning rate applied at a step, counting from 1

        :param step: Step number
        :return: Warmed-up learning rate
        """
        if step <= self.warmup_steps:
            return self.learning_rate * step / self.warmup_steps
        return self.learning_rate

    def point(self) -> Tuple[torch.Tensor, ...]:
        """ Interpolation point y where gradients are evaluated

        :return: One tensor per parameter
        """
        beta1 = self.betas[0]
        return tuple((1.0 - beta1) * z + beta1 * x for z, x in zip(self.z, self.x))


def schedule_free_step(state: OptimizerState, grads: Sequence[torch.Tensor]) -> OptimizerState:
    """ One schedule-free Adam update

    :param state: Current buffers
    :param grads: Gradients at state.point(), one per parameter
    :raises: ShapeError for mismatched gradients, OptimizerError for non-finite gradients
    :return: New state; the input state is left untouched
    """
    if len(grads) != len(state.z):
        raise ShapeError("expected %d gradients, got %d" % (len(state.z), len(grads)))
    beta2 = state.betas[1]
    step = state.step + 1
    rate = state.rate(step)
    peak_rate = max(state.peak_rate, rate)
    weight_sum = state.weight_sum + peak_rate ** 2
    weight = peak_rate ** 2 / weight_sum
    bias_correction = 1.0 - beta2 ** step
    new_z: List[torch.Tensor] = []
    new_x: List[torch.Tensor] = []
    new_v: List[torch.Tensor] = []
    for z, x, v, grad in zip(state.z, state.x, state.v, grads):
        grad = grad.detach()
        if grad.shape != z.shape:
            raise ShapeError("gradient of shape %s for buffer of shape %s" % (tuple(grad.shape), tuple(z.shape)))
        if not bool(torch.isfinite(grad).all()):
            raise OptimizerError("non-finite gradient at step %d" % step)
        v = beta2 * v + (1.0 - beta2) * grad * grad
        denom = torch.sqrt(v / bias_correction) + state.eps
        z = z - rate * grad / denom
        x = (1.0 - weight) * x + weight * z
        new_z.append(z)
        new_x.append(x)
        new_v.append(v)
    return replace(state, z=tuple(new_z), x=tuple(new_x), v=tuple(new_v), step=step, peak_rate=peak_rate,
                   weight_sum=weight_sum)


class ScheduleFreeAdam(torch.optim.Optimizer):
    """
    torch optimizer whose every step applies schedule_free_step

    While training, parameters hold the interpolation point; call eval() to load the averaged
    iterate before predicting and train() to switch back.
    """

    def __init__(self, params, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.99), eps: float = 1e-8,
                 warmup_steps: int = 0):
        if lr <= 0:
            raise PreconditionError("Invalid learning rate: %r" % lr)
        if warmup_steps < 0:
            raise PreconditionError("Invalid warm-up length: %r" % warmup_steps)
        super().__init__(params, {"lr": lr, "betas": tuple(betas), "eps": eps, "warmup_steps": warmup_steps})
        self._group_states = [OptimizerState.initial(group["params"], lr, betas, eps, warmup_steps)
                              for group in self.param_groups]
        self._training = True

    @property
    def states(self) -> List[OptimizerState]:
        """ Current state of each parameter group

        :return: List of OptimizerState
        """
        return list(self._group_states)

    @torch.no_grad()
    def step(self, closure=None) -> Optional[torch.Tensor]:
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        if not self._training:
            raise OptimizerError("step() called while the averaged iterate is loaded; call train() first")
        for index, group in enumerate(self.param_groups):
            grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in group["params"]]
            self._group_states[index] = schedule_free_step(self._group_states[index], grads)
            self._load(group["params"], self._group_states[index].point())
        return loss

    def eval(self):
        """ Load the averaged iterate into the parameters

        """
        if self._training:
            for group, state in zip(self.param_groups, self._group_states):
                self._load(group["params"], state.x)
            self._training = False

    def train(self):
        """ Load the interpolation point back into the parameters

        """
        if not self._training:
            for group, state in zip(self.param_groups, self._group_states):
                self._load(group["params"], state.point())
            self._training = True

    @staticmethod
    @torch.no_grad()
    def _load(params: Sequence[torch.Tensor], values: Sequence[torch.Tensor]):
        for param, value in zip(params, values):
            param.copy_(value)
