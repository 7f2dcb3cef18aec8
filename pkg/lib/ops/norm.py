from typing import Optional

import numpy as np

from ..errors import ShapeError
from ..tensor import Tensor, apply_op, as_tensor

EPSILON = 1e-5
MOMENTUM = 0.1


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = MOMENTUM,
    eps: float = EPSILON,
) -> Tensor:
    """
    Batch normalisation over the leading (batch) axis.

    A (B, D) input is normalised per column; a (B, C, H, W) input per channel over
    the batch and spatial axes. In training mode the batch statistics are used and
    the running statistics are updated in place by an exponential moving average
    (unbiased variance); in evaluation mode the running statistics are used.

    Parameters
    ----------
    x : Tensor
        The input.
    gamma, beta : Tensor
        Per-feature scale and shift of shape (D,) or (C,).
    running_mean, running_var : np.ndarray
        Running statistics, updated in place in training mode.
    training : bool
        Selects batch or running statistics.
    momentum : float, optional
        Weight of the current batch in the running average. Defaults to 0.1.
    eps : float, optional
        Added to the variance. Defaults to 1e-5.

    Raises
    ------
    ShapeError
        If the batch holds a single sample in training mode, or the shapes disagree.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim not in (2, 4) or gamma.shape != (x.shape[1],) or beta.shape != gamma.shape:
        raise ShapeError(f"batch_norm got input {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    if training and x.shape[0] < 2:
        raise ShapeError(f"batch_norm in training mode needs at least 2 samples, got shape {x.shape}")

    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    view = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    count = x.size // x.shape[1]

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mu, var = running_mean, running_var

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = (x.data - mu.reshape(view).astype(x.dtype)) * inv_std.reshape(view)
    out = gamma.data.reshape(view) * x_hat + beta.data.reshape(view)

    def rule(grad):
        d_gamma = (grad * x_hat).sum(axis=axes)
        d_beta = grad.sum(axis=axes)
        d_hat = grad * gamma.data.reshape(view)
        if training:
            d_x = (
                inv_std.reshape(view)
                / count
                * (
                    count * d_hat
                    - d_hat.sum(axis=axes).reshape(view)
                    - x_hat * (d_hat * x_hat).sum(axis=axes).reshape(view)
                )
            )
        else:
            d_x = d_hat * inv_std.reshape(view)
        return d_x, d_gamma, d_beta

    return apply_op("batch_norm", out, (x, gamma, beta), rule)
