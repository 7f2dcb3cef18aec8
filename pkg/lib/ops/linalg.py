from ..errors import ShapeError
from ..tensor import Tensor, apply_op, as_tensor


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an ``m x k`` and a ``k x n`` tensor.

    Parameters
    ----------
    a : Tensor
        Left operand of shape (m, k).
    b : Tensor
        Right operand of shape (k, n).

    Returns
    -------
    Tensor
        The (m, n) product. Gradients are ``dC @ b.T`` and ``a.T @ dC``.

    Raises
    ------
    ShapeError
        If the operands are not matrices or the inner dimensions differ.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")

    out = a.data @ b.data

    def rule(grad):
        return grad @ b.data.T, a.data.T @ grad

    return apply_op("matmul", out, (a, b), rule)
