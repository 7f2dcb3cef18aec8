import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import lib.ops
from lib import ops
from lib.errors import ConfigurationError, EmptyInputError, LabelError, ShapeError
from lib.gradcheck import OP_CASES, check_op
from lib.tensor import Tape, Tensor, apply_op, precision


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(ops.matmul(Tensor(m), Tensor(np.eye(2))).data, m)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_conv2d_identity_kernel():
    x = np.arange(9.0).reshape(1, 3, 3)
    out = ops.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))), stride=1, padding=0)
    assert_array_equal(out.data, x)


def test_conv2d_zero_input(rng):
    out = ops.conv2d(Tensor(np.zeros((2, 6, 6))), Tensor(rng.normal(size=(4, 2, 3, 3))), padding=1)
    assert out.shape == (4, 6, 6)
    assert not out.data.any()


def test_conv2d_is_cross_correlation():
    x = np.zeros((1, 3, 3))
    x[0, 0, 0] = 1.0
    kernel = np.arange(9.0).reshape(1, 1, 3, 3)
    out = ops.conv2d(Tensor(x), Tensor(kernel), padding=1)
    # the top-left input cell meets kernel entry (1, 1) at output (0, 0)
    assert out.data[0, 0, 0] == 4.0


def test_conv2d_non_integral_output_size():
    with pytest.raises(ConfigurationError):
        ops.conv2d(Tensor(np.ones((1, 6, 6))), Tensor(np.ones((1, 1, 3, 3))), stride=2, padding=0)


def test_batch_norm_already_normalized():
    x = np.array([[1.0, -1.0], [-1.0, 1.0]])
    out = ops.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), np.zeros(2), np.ones(2), training=True)
    assert_allclose(out.data, x, atol=1e-5)


def test_batch_norm_zero_gamma_gives_beta(rng):
    beta = np.array([0.5, -2.0, 3.0])
    out = ops.batch_norm(
        Tensor(rng.normal(size=(5, 3))), Tensor(np.zeros(3)), Tensor(beta), np.zeros(3), np.ones(3), training=True
    )
    assert_allclose(out.data, np.broadcast_to(beta, (5, 3)))


def test_batch_norm_train_mode_statistics(rng):
    with precision("float64"):
        running_mean, running_var = np.zeros(4), np.ones(4)
        x = Tensor(rng.normal(3.0, 2.0, size=(16, 4)))
        out = ops.batch_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)), running_mean, running_var, training=True)
    assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-5)
    assert_allclose(out.data.var(axis=0), 1.0, atol=1e-4)
    # running stats moved a tenth of the way towards the batch statistics
    assert_allclose(running_mean, 0.1 * x.data.mean(axis=0))


def test_batch_norm_eval_mode_uses_running_stats():
    out = ops.batch_norm(
        Tensor([[3.0], [5.0]]), Tensor([1.0]), Tensor([0.0]), np.array([1.0]), np.array([4.0]), training=False
    )
    assert_allclose(out.data[:, 0], [1.0, 2.0], rtol=1e-5)


def test_batch_norm_rejects_single_sample_in_training():
    with pytest.raises(ShapeError):
        ops.batch_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), np.zeros(2), np.ones(2), True)


def test_leaky_relu_values():
    assert_allclose(ops.leaky_relu(Tensor([2.0, -2.0]), 0.01).data, [2.0, -0.02])
    assert_array_equal(ops.leaky_relu(Tensor([2.0, -2.0, 0.0]), 0.0).data, [2.0, 0.0, 0.0])


def test_leaky_relu_kink_takes_slope():
    x = Tensor([0.0], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.leaky_relu(x, 0.25))
    tape.backward(loss)
    assert x.grad[0] == pytest.approx(0.25)


def test_leaky_relu_slope_range():
    with pytest.raises(ConfigurationError):
        ops.leaky_relu(Tensor([1.0]), 1.0)


def test_max_pool_rows_values():
    assert_array_equal(ops.max_pool_rows(Tensor([[1.0, 5.0], [3.0, 2.0]])).data, [3.0, 5.0])
    assert_array_equal(ops.max_pool_rows(Tensor([[4.0, -1.0]])).data, [4.0, -1.0])


def test_max_pool_rows_permutation_invariant(rng):
    x = rng.normal(size=(6, 5))
    expected = ops.max_pool_rows(Tensor(x)).data
    for _ in range(10):
        assert_array_equal(ops.max_pool_rows(Tensor(x[rng.permutation(6)])).data, expected)


def test_max_pool_rows_tie_routes_to_first_row():
    x = Tensor([[2.0], [2.0]], requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ops.max_pool_rows(x))
    tape.backward(loss)
    assert_array_equal(x.grad, [[1.0], [0.0]])


def test_max_pool_rows_empty():
    with pytest.raises(EmptyInputError):
        ops.max_pool_rows(Tensor(np.zeros((0, 3))))


def test_cross_entropy_uniform_logits():
    loss = ops.softmax_cross_entropy(Tensor(np.zeros((2, 26))), [0, 25])
    assert loss.item() == pytest.approx(math.log(26), rel=1e-6)


def test_cross_entropy_confident_logits():
    logits = np.zeros((1, 4))
    logits[0, 2] = 1000.0
    assert ops.softmax_cross_entropy(Tensor(logits), [2]).item() == pytest.approx(0.0, abs=1e-6)


def test_cross_entropy_gradient_is_softmax_minus_onehot(rng):
    with precision("float64"):
        logits = Tensor(rng.normal(size=(1, 5)), requires_grad=True)
        with Tape() as tape:
            loss = ops.softmax_cross_entropy(logits, [3])
        tape.backward(loss)
    expected = np.exp(logits.data) / np.exp(logits.data).sum()
    expected[0, 3] -= 1.0
    assert_allclose(logits.grad, expected, atol=1e-12)


def test_cross_entropy_shift_invariant(rng):
    with precision("float64"):
        logits = rng.normal(size=(3, 7))
        base = ops.softmax_cross_entropy(Tensor(logits), [0, 1, 6]).item()
        shifted = ops.softmax_cross_entropy(Tensor(logits + 42.0), [0, 1, 6]).item()
    assert shifted == pytest.approx(base, abs=1e-6)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(LabelError):
        ops.softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])


def test_masked_softmax_ignores_masked_entries():
    mask = np.array([[True, False, True]])
    out = ops.masked_softmax(Tensor([[0.0, 100.0, 0.0]]), mask)
    assert_allclose(out.data, [[0.5, 0.0, 0.5]])


@pytest.mark.parametrize("case", OP_CASES, ids=lambda case: case.name)
def test_op_gradients_match_finite_differences(case):
    with precision("float64"):
        report = check_op(case, np.random.default_rng(1))
    tolerance = 1e-3 if case.name == "batch_norm" else 1e-4
    assert report.checked > 0
    assert report.worst_error < tolerance, f"{case.name}: {report.worst_error:.2e}"


def test_corrupted_backward_rule_is_reported(monkeypatch):
    def doubled_leaky_relu(x, slope=0.01):
        positive = x.data > 0
        out = np.where(positive, x.data, slope * x.data)
        return apply_op("leaky_relu", out, (x,), lambda grad: (np.where(positive, 2 * grad, slope * grad),))

    monkeypatch.setattr(lib.ops, "leaky_relu", doubled_leaky_relu)
    case = next(case for case in OP_CASES if case.name == "leaky_relu")
    with precision("float64"):
        report = check_op(case, np.random.default_rng(1))
    assert report.name == "leaky_relu"
    assert not report.passed
