import numpy as np
import pytest
from numpy.testing import assert_array_equal

from lib import ops
from lib.errors import GradientError, NumericalError, ShapeError
from lib.tensor import Tape, Tensor, branch_log, get_default_dtype, precision, same_branches


def test_sum_gradient_is_all_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(x)
    tape.backward(loss)
    assert_array_equal(x.grad, np.ones((2, 3)))


def test_fan_out_accumulates():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(x + x)
    tape.backward(loss)
    assert_array_equal(x.grad, [2.0, 2.0, 2.0])


def test_repeated_backward_accumulates_on_leaves():
    x = Tensor([1.0, 2.0], requires_grad=True)
    for _ in range(2):
        with Tape() as tape:
            loss = ops.sum(x * 3.0)
        tape.backward(loss)
    assert_array_equal(x.grad, [6.0, 6.0])


def test_constants_receive_no_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([5.0, 7.0])
    with Tape() as tape:
        loss = ops.sum(x * c)
    tape.backward(loss)
    assert c.grad is None
    assert_array_equal(x.grad, [5.0, 7.0])


def test_backward_rejects_non_scalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_nan_gradient_names_the_op():
    x = Tensor([0.0, 1.0], requires_grad=True)
    with Tape() as tape:
        y = ops.div(Tensor([1.0, 1.0]), x + 1.0)
        loss = ops.sum(y)
    # corrupt the rule of the first record, the addition
    tape.records[0].backward = lambda grad: (grad * np.inf,)
    with pytest.raises(GradientError) as excinfo:
        tape.backward(loss)
    assert excinfo.value.op_name == "add"


def test_non_finite_data_is_rejected():
    with pytest.raises(NumericalError):
        Tensor([1.0, np.nan])


def test_backward_is_deterministic(rng):
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(3, 2))
    grads = []
    for _ in range(2):
        x = Tensor(a, requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(ops.leaky_relu(ops.matmul(x, Tensor(b)), 0.01))
        tape.backward(loss)
        grads.append(x.grad)
    assert_array_equal(grads[0], grads[1])


def test_precision_switches_and_restores_dtype():
    assert get_default_dtype() is np.float32
    with precision("float64"):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_branch_log_records_decisions():
    x = Tensor([[1.0, -1.0], [-2.0, 3.0]])
    with branch_log() as first:
        ops.leaky_relu(x, 0.01)
        ops.max_pool_rows(x)
    with branch_log() as second:
        ops.leaky_relu(x, 0.01)
        ops.max_pool_rows(x)
    assert [name for name, _ in first] == ["leaky_relu", "max_pool_rows"]
    assert same_branches(first, second)

    with branch_log() as flipped:
        ops.leaky_relu(Tensor([[1.0, 1.0], [-2.0, 3.0]]), 0.01)
        ops.max_pool_rows(x)
    assert not same_branches(first, flipped)


def test_nested_branch_logs_only_fill_the_innermost():
    with branch_log() as outer:
        with branch_log() as inner:
            ops.leaky_relu(Tensor([1.0]), 0.01)
    assert outer == []
    assert len(inner) == 1
