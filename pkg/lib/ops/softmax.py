import numpy as np
from scipy.special import logsumexp

from ..errors import EmptyInputError, LabelError, ShapeError
from ..tensor import Tensor, apply_op, as_tensor


def _softmax_rule(y: np.ndarray):
    def rule(grad):
        return (y * (grad - (grad * y).sum(axis=-1, keepdims=True)),)

    return rule


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row maximum."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return apply_op("softmax", y, (x,), _softmax_rule(y))


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """
    Softmax over the last axis restricted to entries where ``mask`` is True.

    Masked-out entries behave as minus infinity: they receive probability zero and
    no gradient. Every row needs at least one retained entry.
    """
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match input {x.shape}")
    if not mask.any(axis=-1).all():
        raise EmptyInputError("masked_softmax needs at least one retained entry per row")

    masked = np.where(mask, x.data, -np.inf)
    e = np.where(mask, np.exp(masked - masked.max(axis=-1, keepdims=True)), 0.0)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)
    return apply_op("masked_softmax", y, (x,), _softmax_rule(y))


def _check_labels(labels, rows: int, classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (rows,):
        raise ShapeError(f"expected {rows} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= classes:
        raise LabelError(f"labels must lie in [0, {classes}), got {labels.tolist()}")
    return labels


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """
    Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    Parameters
    ----------
    logits : Tensor
        Scores of shape (B, C), or (C,) for a single sample.
    labels : array_like of int
        True classes, one per row.

    Returns
    -------
    Tensor
        Scalar loss. Its gradient is ``(softmax(logits) - onehot(labels)) / B``.
    """
    logits = as_tensor(logits)
    single = logits.ndim == 1
    scores = logits.data[None] if single else logits.data
    if scores.ndim != 2:
        raise ShapeError(f"logits must be (B, C) or (C,), got {logits.shape}")

    batch, classes = scores.shape
    labels = _check_labels(labels, batch, classes)
    rows = np.arange(batch)

    log_probs = scores - logsumexp(scores, axis=1, keepdims=True)
    loss = np.asarray(-log_probs[rows, labels].mean(), dtype=logits.dtype)

    def rule(grad):
        d = np.exp(log_probs)
        d[rows, labels] -= 1.0
        d *= grad / batch
        return (d[0] if single else d,)

    return apply_op("softmax_cross_entropy", loss, (logits,), rule)
