import numpy as np

from ..errors import ConfigurationError
from ..tensor import Tensor, apply_op, as_tensor, note_branch, unbroadcast


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def rule(grad):
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)

    return apply_op("add", out, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def rule(grad):
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)

    return apply_op("sub", out, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def rule(grad):
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)

    return apply_op("mul", out, (a, b), rule)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def rule(grad):
        return (
            unbroadcast(grad / b.data, a.shape),
            unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )

    return apply_op("div", out, (a, b), rule)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def rule(grad):
        return (-grad,)

    return apply_op("neg", -a.data, (a,), rule)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    """
    Elementwise ``max(x, slope * x)``.

    The derivative at exactly zero is taken as ``slope``.

    Parameters
    ----------
    x : Tensor
        The input.
    slope : float, optional
        Negative-side slope in ``[0, 1)``. Defaults to 0.01; 0 gives a plain ReLU.

    Returns
    -------
    Tensor
        Tensor of the same shape as ``x``.
    """
    if not 0.0 <= slope < 1.0:
        raise ConfigurationError(f"LeakyReLU slope must lie in [0, 1), got {slope}")

    x = as_tensor(x)
    positive = x.data > 0
    note_branch("leaky_relu", positive)
    out = np.where(positive, x.data, slope * x.data).astype(x.dtype, copy=False)

    def rule(grad):
        return (np.where(positive, grad, slope * grad).astype(grad.dtype, copy=False),)

    return apply_op("leaky_relu", out, (x,), rule)
