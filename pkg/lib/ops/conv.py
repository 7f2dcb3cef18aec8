import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, ShapeError
from ..tensor import Tensor, apply_op, as_tensor


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """
    Computes ``(size + 2 * padding - kernel) / stride + 1``.

    Raises
    ------
    ConfigurationError
        If the result is not a positive integer.
    """
    span = size + 2 * padding - kernel
    if stride < 1 or span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"input size {size} with kernel {kernel}, stride {stride}, padding {padding} "
            "does not give an integral output size"
        )
    return span // stride + 1


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Two-dimensional cross-correlation with zero padding.

    Implemented as an im2col matrix product. Accepts a single image of shape
    (C_in, H, W) or a batch of shape (B, C_in, H, W); the output has the same rank.

    Parameters
    ----------
    x : Tensor
        Input image(s).
    kernels : Tensor
        Weights of shape (C_out, C_in, kH, kW). Kernels are not flipped.
    stride : int, optional
        Step between windows. Defaults to 1.
    padding : int, optional
        Zero rows/columns added on every side. Defaults to 0.

    Returns
    -------
    Tensor
        Output of shape (C_out, H', W') or (B, C_out, H', W').
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    single = x.ndim == 3
    data = x.data[None] if single else x.data
    if data.ndim != 4 or kernels.ndim != 4 or data.shape[1] != kernels.shape[1]:
        raise ShapeError(f"cannot convolve input {x.shape} with kernels {kernels.shape}")

    batch, channels, height, width = data.shape
    c_out, _, k_h, k_w = kernels.shape
    out_h = conv_output_size(height, k_h, stride, padding)
    out_w = conv_output_size(width, k_w, stride, padding)

    padded = np.pad(data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (k_h, k_w), axis=(2, 3))[:, :, ::stride, ::stride]
    windows = windows[:, :, :out_h, :out_w]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * k_h * k_w)
    weight = kernels.data.reshape(c_out, -1)

    out = (cols @ weight.T).reshape(batch, out_h, out_w, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out[0] if single else out)

    def rule(grad):
        grad = grad[None] if single else grad
        flat = grad.transpose(0, 2, 3, 1).reshape(-1, c_out)

        d_kernels = (flat.T @ cols).reshape(kernels.shape)
        d_cols = (flat @ weight).reshape(batch, out_h, out_w, channels, k_h, k_w)

        d_padded = np.zeros_like(padded)
        for i in range(k_h):
            for j in range(k_w):
                d_padded[
                    :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
                ] += d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)

        d_x = d_padded[:, :, padding : padding + height, padding : padding + width]
        d_x = d_x[0] if single else d_x
        return np.ascontiguousarray(d_x), d_kernels

    return apply_op("conv2d", out, (x, kernels), rule)


def global_avg_pool(x: Tensor) -> Tensor:
    """Averages the spatial map: (B, C, H, W) -> (B, C) or (C, H, W) -> (C,)."""
    from .reduce import mean

    return mean(x, axis=(-2, -1))
