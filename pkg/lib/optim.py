import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from .errors import ConfigurationError, ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Hyperparameters and per-parameter velocities of SGD with momentum."""

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocities: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight decay must be non-negative, got {self.weight_decay}")


def sgd_momentum_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: OptimizerState,
):
    """
    Applies one SGD step in place.

    For every parameter ``v <- momentum * v + grad + weight_decay * param`` and then
    ``param <- param - learning_rate * v``. A missing gradient counts as zero.

    Parameters
    ----------
    params : Mapping[str, Tensor]
        Parameters by name.
    grads : Mapping[str, Optional[np.ndarray]]
        Gradients by the same names.
    state : OptimizerState
        Hyperparameters and velocities, created on first use.

    Raises
    ------
    ShapeError
        If a gradient or a stored velocity has a different shape than its parameter.
    """
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}")

        velocity = state.velocities.setdefault(name, np.zeros_like(param.data))
        if velocity.shape != param.shape:
            raise ShapeError(f"velocity for '{name}' has shape {velocity.shape}, parameter has {param.shape}")

        velocity *= state.momentum
        velocity += grad + state.weight_decay * param.data
        param.data -= state.learning_rate * velocity


def lr_at_epoch(base_lr: float, epoch: int, every: int = 10, factor: float = 0.5) -> float:
    """Step schedule: ``base_lr * factor ** floor(epoch / every)``."""
    if epoch < 0:
        raise ConfigurationError(f"epoch must be non-negative, got {epoch}")
    return base_lr * factor ** (epoch // every)


@dataclass
class ParamGroup:
    name: str
    params: Dict[str, Tensor]
    state: OptimizerState
    base_lr: float


class SGD:
    """
    SGD with momentum over named parameter groups, each with its own learning rate.

    The joint training stage uses two groups, ``backbone`` and ``gcn``; the
    pretraining stage uses one.
    """

    def __init__(self, momentum: float = 0.9, weight_decay: float = 0.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.groups: List[ParamGroup] = []

    def add_group(self, name: str, params: Mapping[str, Tensor], lr: float):
        state = OptimizerState(lr, self.momentum, self.weight_decay)
        self.groups.append(ParamGroup(name, dict(params), state, lr))

    def set_epoch(self, epoch: int, every: int = 10):
        for group in self.groups:
            group.state.learning_rate = lr_at_epoch(group.base_lr, epoch, every)

    def learning_rate(self, name: str) -> float:
        for group in self.groups:
            if group.name == name:
                return group.state.learning_rate
        return 0.0

    def step(self, scale: float = 1.0):
        """Updates every group from the gradients stored on the parameters, times ``scale``."""
        for group in self.groups:
            grads = {
                name: None if p.grad is None else p.grad * scale for name, p in group.params.items()
            }
            sgd_momentum_step(group.params, grads, group.state)

    def zero_grad(self):
        for group in self.groups:
            for p in group.params.values():
                p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {
            name: velocity
            for group in self.groups
            for name, velocity in group.state.velocities.items()
        }

    def load_state_dict(self, velocities: Mapping[str, np.ndarray]):
        for group in self.groups:
            for name, param in group.params.items():
                if name in velocities:
                    group.state.velocities[name] = np.array(velocities[name], dtype=param.dtype)
