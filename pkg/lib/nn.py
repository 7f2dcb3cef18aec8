from typing import Iterator, List, Optional, Tuple

import numpy as np

from .ops import batch_norm, conv2d, matmul
from .tensor import Tensor


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> Tensor:
    """He-scaled normal weights, ``std = sqrt(2 / fan_in)``, marked trainable."""
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), requires_grad=True)


class Module:
    """
    Base class for everything holding parameters.

    Parameters are the trainable tensors found among the instance attributes, directly
    or inside child modules and lists of modules. Names follow the attribute path,
    e.g. ``stages.0.conv1.kernels``.
    """

    training: bool = True
    buffer_names: Tuple[str, ...] = ()

    def _children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name in self.buffer_names:
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self._children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    """Affine map ``x @ weight + bias`` over the last axis; accepts (N, in) or (in,)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = he_normal(rng, (in_features, out_features), in_features)
        self.bias = Tensor.zeros((out_features,), requires_grad=True) if bias else None

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: Tensor) -> Tensor:
        single = x.ndim == 1
        out = matmul(x.reshape(1, -1) if single else x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out.reshape(-1) if single else out


class BatchNorm(Module):
    """Batch normalisation with learnable scale/shift and running statistics."""

    buffer_names = ("running_mean", "running_var")

    def __init__(self, features: int, momentum: float = 0.1, eps: float = 1e-5):
        self.gamma = Tensor.ones((features,), requires_grad=True)
        self.beta = Tensor.zeros((features,), requires_grad=True)
        self.running_mean = np.zeros(features, dtype=self.gamma.dtype)
        self.running_var = np.ones(features, dtype=self.gamma.dtype)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Conv2d(Module):
    """Bias-free convolution layer; batch norm follows every convolution in the backbone."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: Optional[int] = None,
    ):
        fan_in = in_channels * kernel_size * kernel_size
        self.kernels = he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in)
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.kernels, stride=self.stride, padding=self.padding)
