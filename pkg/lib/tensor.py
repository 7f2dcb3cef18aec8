import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import GradientError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_default_dtype = np.float32
_active_tapes: List["Tape"] = []
_branch_logs: List[list] = []


def get_default_dtype() -> type:
    """Returns the dtype new tensors are created with."""
    return _default_dtype


@contextmanager
def precision(dtype) -> Iterator[None]:
    """
    Temporarily switches the default tensor dtype.

    Training runs in single precision; gradient checks wrap their forward passes in
    ``precision("float64")`` so that finite differences are meaningful.

    Parameters
    ----------
    dtype : str or numpy dtype
        Either ``"float32"`` or ``"float64"``.
    """
    global _default_dtype

    previous = _default_dtype
    _default_dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _default_dtype = previous


def current_tape() -> Optional["Tape"]:
    """Returns the innermost active tape, or None when running without recording."""
    return _active_tapes[-1] if _active_tapes else None


@contextmanager
def branch_log() -> Iterator[List[Tuple[str, np.ndarray]]]:
    """
    Collects the discrete decisions taken by the ops run inside the block.

    Activation signs and argmax choices are appended as ``(op name, array)`` in
    execution order. Two evaluations took the same differentiable branch exactly
    when their logs are equal; see `same_branches`.
    """
    log: List[Tuple[str, np.ndarray]] = []
    _branch_logs.append(log)
    try:
        yield log
    finally:
        _branch_logs.pop()


def note_branch(name: str, decision) -> None:
    if _branch_logs:
        _branch_logs[-1].append((name, np.array(decision)))


def same_branches(a, b) -> bool:
    return len(a) == len(b) and all(x == y and np.array_equal(p, q) for (x, p), (y, q) in zip(a, b))


class Tensor:
    """An n-dimensional array that can take part in reverse-mode differentiation."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        """
        Creates a tensor from array-like data.

        Parameters
        ----------
        data : array_like
            The values, copied into a new row-major array.
        requires_grad : bool, optional
            Marks the tensor as a leaf that receives gradients. Defaults to False.
        dtype : numpy dtype, optional
            Overrides the current default dtype.

        Raises
        ------
        NumericalError
            If the data contains NaN or infinite values.
        """
        array = np.array(data, dtype=dtype or _default_dtype)
        if not np.all(np.isfinite(array)):
            raise NumericalError("tensor data contains non-finite values")

        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tracked = requires_grad

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = False
        out.grad = None
        out._tracked = False
        return out

    @staticmethod
    def zeros(shape: Tuple[int, ...], requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def ones(shape: Tuple[int, ...], requires_grad: bool = False) -> "Tensor":
        return Tensor(np.ones(shape), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tracked(self) -> bool:
        """True for requires_grad leaves and results recorded on a tape."""
        return self._tracked

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def __add__(self, other) -> "Tensor":
        from .ops import add

        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        from .ops import add

        return add(other, self)

    def __sub__(self, other) -> "Tensor":
        from .ops import sub

        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        from .ops import sub

        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        from .ops import mul

        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        from .ops import mul

        return mul(other, self)

    def __truediv__(self, other) -> "Tensor":
        from .ops import div

        return div(self, other)

    def __neg__(self) -> "Tensor":
        from .ops import neg

        return neg(self)

    def __matmul__(self, other) -> "Tensor":
        from .ops import matmul

        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        from .ops import take

        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from .ops import sum as sum_

        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from .ops import mean

        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        from .ops import reshape

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        from .ops import transpose

        return transpose(self)


def as_tensor(value) -> Tensor:
    """Wraps plain numbers and arrays as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class Record:
    """One primitive operation on the tape."""

    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """
    Records primitive operations for a single backward pass.

    Used as a context manager; every operation executed inside the block whose inputs
    include a tracked tensor is appended in execution order, so the record list is
    topologically sorted by construction.
    """

    def __init__(self):
        self.records: List[Record] = []

    def __enter__(self) -> "Tape":
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc_info):
        _active_tapes.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, record: Record):
        self.records.append(record)

    def backward(self, loss: Tensor):
        backward(self, loss)


def apply_op(name: str, output: np.ndarray, inputs: Sequence[Tensor], rule: BackwardFn) -> Tensor:
    """
    Wraps the result of a primitive and records it on the active tape.

    Parameters
    ----------
    name : str
        The op name used in diagnostics.
    output : np.ndarray
        The forward result.
    inputs : Sequence[Tensor]
        The tensors the result depends on, in the order the backward rule returns
        their gradients.
    rule : BackwardFn
        Maps the upstream gradient to one gradient (or None) per input.

    Returns
    -------
    Tensor
        The result tensor.
    """
    if not np.all(np.isfinite(output)):
        raise NumericalError(f"op '{name}' produced non-finite values")

    out = Tensor._wrap(output)
    tape = current_tape()
    if tape is not None and any(t._tracked for t in inputs):
        out._tracked = True
        tape.record(Record(name, tuple(inputs), out, rule))
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sums a broadcast gradient back down to the shape of the original operand."""
    if grad.shape == shape:
        return grad

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(tape: Tape, loss: Tensor):
    """
    Propagates gradients from a scalar loss to every requires_grad leaf on the tape.

    Records are swept in reverse order; a tensor used by several operations receives
    the sum of their contributions. Leaf gradients are added to any gradient already
    stored on the leaf, so several backward passes accumulate.

    Parameters
    ----------
    tape : Tape
        The tape the loss was computed on.
    loss : Tensor
        A single-element tensor produced by a recorded operation.

    Raises
    ------
    ShapeError
        If the loss is not a scalar.
    GradientError
        If a backward rule yields NaN or infinite values; the error names the op.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss._tracked:
        raise ValueError("loss was not recorded on the tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}

    for record in reversed(tape.records):
        upstream = grads.pop(id(record.output), None)
        if upstream is None:
            continue

        for tensor, grad in zip(record.inputs, record.backward(upstream)):
            if grad is None or not tensor._tracked:
                continue
            if grad.shape != tensor.shape:
                raise ShapeError(
                    f"op '{record.name}' returned gradient of shape {grad.shape} for input {tensor.shape}"
                )
            if not np.all(np.isfinite(grad)):
                raise GradientError(record.name)

            grad = grad.astype(tensor.dtype, copy=False)
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else grad
            if tensor.requires_grad:
                leaves[key] = tensor

    logger.debug("backward over %d records reached %d leaves", len(tape.records), len(leaves))

    for key, tensor in leaves.items():
        grad = grads[key]
        tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
