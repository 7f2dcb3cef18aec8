import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from lib import ops
from lib.backbone import BackboneConfig
from lib.errors import ConfigurationError, EmptyInputError, ShapeError
from lib.gcn import (
    LevelState,
    LocalGraphConv,
    MaxPoolClassifier,
    MessagePassing,
    TactileViewGCN,
    ViewGCN,
    ViewGCNConfig,
    ViewSelector,
    classify,
    fuse_messages,
    local_graph_conv,
    nonlocal_messages,
    shape_descriptor,
    total_loss,
)
from lib.gradcheck import run_gradcheck
from lib.tensor import Tape, Tensor, precision
from lib.viewpoints import circular_viewpoints, cube_viewpoints

D = 16


def _identity_local_conv(rng):
    conv = LocalGraphConv(D, rng, slope=None)
    conv.weight.weight.data[...] = np.eye(D)
    conv.affine.weight.data[...] = np.eye(D)
    conv.use_norm = False
    return conv


def _model(rng, num_classes=4, levels=3, num_views=8):
    gcn_config = ViewGCNConfig(num_views=num_views, feature_dim=64, num_classes=num_classes, selector_hidden=8, levels=levels)
    return TactileViewGCN(BackboneConfig.for_preset("tiny", num_classes), gcn_config, rng).eval()


def test_level_sizes():
    assert ViewGCNConfig(num_views=8).level_sizes() == [8, 4, 2]
    assert ViewGCNConfig(num_views=12, n_neighbors=2).level_sizes() == [12, 6, 3]
    assert ViewGCNConfig(num_views=8, n_neighbors=3).neighbors_at(2) == 1


@pytest.mark.parametrize(
    "kwargs",
    [dict(levels=0), dict(levels=4), dict(n_neighbors=8), dict(n_neighbors=0), dict(fps_seed_index=8)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        ViewGCNConfig(num_views=8, **kwargs)


def test_local_conv_identity_configuration(rng):
    features = rng.normal(size=(5, D))
    state = LevelState(0, Tensor(features), rng.normal(size=(5, 3)), Tensor(np.eye(5)))
    assert_allclose(local_graph_conv(state, _identity_local_conv(rng)).data, features, rtol=1e-6, atol=1e-6)


def test_local_conv_uniform_attention_gives_equal_rows(rng):
    state = LevelState(0, Tensor(rng.normal(size=(4, D))), rng.normal(size=(4, 3)), Tensor(np.full((4, 4), 0.25)))
    out = local_graph_conv(state, LocalGraphConv(D, rng), training=False).data
    assert_allclose(out, np.broadcast_to(out[0], out.shape), rtol=1e-6, atol=1e-6)


def test_local_conv_permutation_equivariant(rng):
    conv = LocalGraphConv(D, rng)
    features = rng.normal(size=(6, D))
    coords = rng.normal(size=(6, 3))
    adjacency = ops.softmax(Tensor(rng.normal(size=(6, 6)))).data
    out = local_graph_conv(LevelState(0, Tensor(features), coords, Tensor(adjacency)), conv).data
    perm = rng.permutation(6)
    permuted = LevelState(0, Tensor(features[perm]), coords[perm], Tensor(adjacency[np.ix_(perm, perm)]))
    assert_allclose(local_graph_conv(permuted, conv).data, out[perm], rtol=1e-5, atol=1e-5)


def test_local_conv_shape_mismatch(rng):
    state = LevelState(0, Tensor(np.zeros((4, D))), np.zeros((4, 3)), Tensor(np.eye(3)))
    with pytest.raises(ShapeError):
        local_graph_conv(state, LocalGraphConv(D, rng))


def test_constant_message_network(rng):
    params = MessagePassing(D, rng)
    params.tau.weight.data[...] = 0.0
    bias = rng.normal(size=D)
    params.tau.bias.data[...] = bias
    messages = nonlocal_messages(Tensor(rng.normal(size=(5, D))), params).data
    expected = np.where(bias > 0, bias, 0.01 * bias).astype(np.float32)
    assert_allclose(messages, np.broadcast_to(expected, (5, 5, D)), rtol=1e-6)


def test_messages_shape_and_direction(rng):
    params = MessagePassing(64, rng)
    messages = nonlocal_messages(Tensor(rng.normal(size=(8, 64))), params).data
    assert messages.shape == (8, 8, 64)
    assert not np.allclose(messages[0, 1], messages[1, 0])


def _selecting_fusion(rng, half):
    """Fusion returning the first (features) or second (received messages) half of its input."""
    params = MessagePassing(D, rng, slope=None)
    weight = np.zeros((2 * D, D))
    weight[half * D : (half + 1) * D] = np.eye(D)
    params.fuse.weight.data[...] = weight
    params.use_norm = False
    return params


def test_zero_messages_keep_features(rng):
    features = rng.normal(size=(4, D))
    out = fuse_messages(Tensor(features), Tensor(np.zeros((4, 4, D))), _selecting_fusion(rng, 0)).data
    assert_allclose(out, features, rtol=1e-6, atol=1e-6)


def test_single_node_receives_its_own_message(rng):
    messages = rng.normal(size=(1, 1, D))
    out = fuse_messages(Tensor(rng.normal(size=(1, D))), Tensor(messages), _selecting_fusion(rng, 1), training=False)
    assert_allclose(out.data, messages[0], rtol=1e-6, atol=1e-6)


def test_received_messages_match_explicit_sum(rng):
    with precision("float64"):
        messages = rng.normal(size=(6, 6, D))
        out = fuse_messages(Tensor(rng.normal(size=(6, D))), Tensor(messages), _selecting_fusion(rng, 1)).data
    expected = np.zeros((6, D))
    for i in range(6):
        for j in range(6):
            expected[i] += messages[j, i]
    assert_allclose(out, expected, rtol=1e-12, atol=1e-12)


def test_fusion_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        fuse_messages(Tensor(np.zeros((4, D))), Tensor(np.zeros((3, 3, D))), MessagePassing(D, rng))


def test_selector_outputs_are_distributions(rng):
    probabilities = ViewSelector(D, 8, 26, rng).probabilities(Tensor(rng.normal(size=(10, D)) * 5)).data
    assert_allclose(probabilities.sum(axis=1), 1.0, atol=1e-5)
    assert np.all(probabilities >= 0)


def test_descriptor_shape_and_level_sizes(rng):
    model = ViewGCN(ViewGCNConfig(num_views=8, feature_dim=64, num_classes=4, selector_hidden=8), rng).eval()
    coords = cube_viewpoints()
    state = LevelState(0, Tensor(rng.normal(size=(8, 64))), coords, model.adjacency(0, coords))
    descriptor, trace = shape_descriptor(state, model)
    assert descriptor.shape == (192,)
    assert trace.level_sizes == [8, 4, 2]
    assert [len(selection.indices) for selection in trace.selections] == [4, 2]
    # 4 slots with 4 candidates, then 2 slots over all 4 nodes
    assert trace.view_terms == 4 * 4 + 2 * 4


def test_twelve_view_hierarchy(rng):
    model = ViewGCN(ViewGCNConfig(num_views=12, feature_dim=D, num_classes=4, selector_hidden=8, n_neighbors=2), rng)
    _, trace = model.eval()(Tensor(rng.normal(size=(12, D))), circular_viewpoints(12, 30))
    assert trace.level_sizes == [12, 6, 3]


def test_single_level_is_pooled_local_conv(rng):
    model = ViewGCN(ViewGCNConfig(num_views=8, feature_dim=D, num_classes=4, levels=1), rng).eval()
    coords = cube_viewpoints()
    features = Tensor(rng.normal(size=(8, D)))
    descriptor, trace = model.shape_descriptor(features, coords)
    expected = ops.max_pool_rows(model.local[0](LevelState(0, features, coords, model.adjacency(0, coords))))
    assert_array_equal(descriptor.data, expected.data)
    assert trace.selections == []


def test_classify(rng):
    model = ViewGCN(ViewGCNConfig(num_views=8, feature_dim=D, num_classes=5), rng)
    model.classifier.bias.data[...] = np.arange(5)
    assert_array_equal(classify(Tensor(np.zeros(3 * D)), model).data, np.arange(5))
    with pytest.raises(ShapeError):
        classify(Tensor(np.zeros(2 * D)), model)


def test_eval_forward_is_deterministic(rng):
    model = _model(rng)
    frames = rng.uniform(size=(8, 1, 32, 32))
    first, _ = model(Tensor(frames), cube_viewpoints())
    second, _ = model(Tensor(frames.copy()), cube_viewpoints())
    assert_array_equal(first.data, second.data)


def test_joint_permutation_is_bit_identical(rng):
    model = _model(rng)
    frames = rng.uniform(size=(8, 1, 32, 32))
    coords = cube_viewpoints()
    logits, trace = model(Tensor(frames), coords)
    for _ in range(3):
        perm = rng.permutation(8)
        permuted_logits, permuted_trace = model(Tensor(frames[perm]), coords[perm])
        assert_array_equal(permuted_logits.data, logits.data)
        assert_array_equal(permuted_trace.descriptor.data, trace.descriptor.data)


@pytest.mark.slow
@pytest.mark.parametrize("coords", [cube_viewpoints(), circular_viewpoints(12, 30)], ids=["cube8", "circular12"])
def test_joint_permutation_over_many_draws(coords, rng):
    count = len(coords)
    model = _model(rng, num_views=count)
    for _ in range(50):
        frames = rng.uniform(size=(count, 1, 32, 32))
        logits, trace = model(Tensor(frames), coords)
        perm = rng.permutation(count)
        permuted_logits, permuted_trace = model(Tensor(frames[perm]), coords[perm])
        assert_array_equal(permuted_logits.data, logits.data)
        assert_array_equal(permuted_trace.descriptor.data, trace.descriptor.data)


def test_frame_only_permutation_changes_logits(rng):
    model = _model(rng)
    frames = rng.uniform(size=(8, 1, 32, 32))
    coords = cube_viewpoints()
    logits, _ = model(Tensor(frames), coords)
    outcomes = [model(Tensor(frames[rng.permutation(8)]), coords)[0].data for _ in range(5)]
    assert not all(np.allclose(outcome, logits.data) for outcome in outcomes)


def test_max_pool_baseline_ignores_pairing(rng):
    model = MaxPoolClassifier(BackboneConfig.for_preset("tiny", 4), rng).eval()
    frames = rng.uniform(size=(8, 1, 32, 32))
    coords = cube_viewpoints()
    logits, trace = model(Tensor(frames), coords)
    assert logits.shape == (4,)
    assert trace.view_terms == 0
    shuffled, _ = model(Tensor(frames[rng.permutation(8)]), coords)
    assert_allclose(shuffled.data, logits.data, rtol=1e-5, atol=1e-6)


def test_mismatched_frames_and_viewpoints(rng):
    with pytest.raises(ShapeError):
        _model(rng)(Tensor(np.zeros((7, 1, 32, 32))), cube_viewpoints())


def test_total_loss_without_view_terms():
    logits = Tensor([0.5, -1.0, 2.0])
    expected = ops.softmax_cross_entropy(logits, [1]).item()
    assert total_loss(logits, [], 1, expected_terms=0).item() == pytest.approx(expected)


def test_uniform_selector_outputs_add_log_classes_per_term():
    logits = Tensor(np.zeros(26))
    outputs = [Tensor(np.zeros((4, 26))), Tensor(np.zeros((4, 26))), Tensor(np.zeros((2, 26)))]
    loss = total_loss(logits, outputs, 3, expected_terms=10).item()
    assert loss == pytest.approx(11 * math.log(26), rel=1e-5)


def test_total_loss_matches_scalar_reference(rng):
    with precision("float64"):
        logits = Tensor(rng.normal(size=5))
        outputs = [Tensor(rng.normal(size=(3, 5))) for _ in range(3)]
        loss = total_loss(logits, outputs, 2).item()

    def cross_entropy(row, label):
        return math.log(sum(math.exp(v) for v in row)) - row[label]

    reference = cross_entropy(logits.data.tolist(), 2)
    for out in outputs:
        for row in out.data.tolist():
            reference += cross_entropy(row, 2)
    assert loss == pytest.approx(reference, abs=1e-6)


def test_view_loss_weight_scales_selector_terms():
    logits = Tensor(np.zeros(4))
    outputs = [Tensor(np.zeros((2, 4)))]
    loss = total_loss(logits, outputs, 0, view_loss_weight=0.5).item()
    assert loss == pytest.approx(2 * math.log(4), rel=1e-5)


def test_total_loss_needs_selector_outputs():
    with pytest.raises(EmptyInputError):
        total_loss(Tensor(np.zeros(4)), None, 0)
    with pytest.raises(EmptyInputError):
        total_loss(Tensor(np.zeros(4)), [Tensor(np.zeros((2, 4)))], 0, expected_terms=3)


def test_every_parameter_group_gets_gradient(rng):
    model = _model(rng).train()
    with Tape() as tape:
        logits, trace = model(Tensor(rng.uniform(size=(8, 1, 32, 32))), cube_viewpoints())
        loss = model.loss(logits, trace, 1)
    tape.backward(loss)
    for name, param in model.named_parameters():
        if name.startswith("backbone.head."):
            assert param.grad is None
        elif not name.endswith(".bias") or name.startswith("gcn.classifier"):
            assert param.grad is not None and np.any(param.grad), name


@pytest.mark.slow
def test_model_gradients_match_finite_differences():
    report = run_gradcheck(num_classes=4, views="cube8", seed=0, samples=5)
    failures = [(r.name, r.worst_error) for r in report.failures]
    assert report.passed, failures
    assert {r.name for r in report.groups} >= {
        "relation",
        "local_weight",
        "local_psi",
        "message_tau",
        "fusion",
        "selectors",
        "classifier",
        "backbone_head",
        "backbone",
    }
