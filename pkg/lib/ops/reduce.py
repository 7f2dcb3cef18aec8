import numpy as np

from ..errors import EmptyInputError, ShapeError
from ..tensor import Tensor, apply_op, as_tensor, note_branch


def _restore(grad: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def rule(grad):
        return (np.array(_restore(grad, x.shape, axis, keepdims)),)

    return apply_op("sum", np.asarray(out), (x,), rule)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.mean(x.data, axis=axis, keepdims=keepdims)
    count = x.size // max(np.asarray(out).size, 1)

    def rule(grad):
        return (np.array(_restore(grad, x.shape, axis, keepdims)) / count,)

    return apply_op("mean", np.asarray(out, dtype=x.dtype), (x,), rule)


def max_pool_rows(x: Tensor) -> Tensor:
    """
    Column-wise maximum over the rows of an ``N x D`` tensor.

    The gradient of each column goes to the first row holding its maximum.

    Parameters
    ----------
    x : Tensor
        Node features of shape (N, D) with N >= 1.

    Returns
    -------
    Tensor
        Pooled vector of shape (D,).

    Raises
    ------
    EmptyInputError
        If ``x`` has no rows.
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"max_pool_rows expects a matrix, got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyInputError("max_pool_rows needs at least one row")

    winners = np.argmax(x.data, axis=0)
    note_branch("max_pool_rows", winners)
    columns = np.arange(x.shape[1])
    out = x.data[winners, columns]

    def rule(grad):
        full = np.zeros_like(x.data)
        full[winners, columns] = grad
        return (full,)

    return apply_op("max_pool_rows", out, (x,), rule)
