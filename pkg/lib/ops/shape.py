from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeError
from ..tensor import Tensor, apply_op, as_tensor


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def rule(grad):
        return (grad.reshape(x.shape),)

    return apply_op("reshape", out, (x,), rule)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inverse = None if axes is None else np.argsort(axes)

    def rule(grad):
        return (np.transpose(grad, inverse),)

    return apply_op("transpose", out, (x,), rule)


def expand(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Broadcasts ``x`` to ``shape``; the gradient sums over the repeated axes."""
    from ..tensor import unbroadcast

    x = as_tensor(x)
    try:
        out = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    except ValueError:
        raise ShapeError(f"cannot expand shape {x.shape} to {tuple(shape)}")

    def rule(grad):
        return (unbroadcast(grad, x.shape),)

    return apply_op("expand", out, (x,), rule)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]} along axis {axis}")

    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(grad):
        return tuple(np.split(grad, bounds, axis=axis))

    return apply_op("concat", out, tuple(tensors), rule)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"cannot stack shapes {[t.shape for t in tensors]}")

    out = np.stack([t.data for t in tensors], axis=axis)

    def rule(grad):
        return tuple(np.moveaxis(grad, axis, 0))

    return apply_op("stack", out, tuple(tensors), rule)


def take(x: Tensor, index) -> Tensor:
    """
    NumPy-style indexing (integers, slices, integer arrays).

    Repeated indices are allowed; their gradients accumulate.
    """
    x = as_tensor(x)
    if isinstance(index, (list, tuple)) and all(isinstance(i, (int, np.integer)) for i in index):
        index = np.asarray(index, dtype=np.int64)
    out = np.array(x.data[index])

    def rule(grad):
        full = np.zeros_like(x.data)
        np.add.at(full, index, grad)
        return (full,)

    return apply_op("take", out, (x,), rule)
