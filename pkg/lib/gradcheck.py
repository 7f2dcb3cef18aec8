import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from . import ops
from .backbone import BackboneConfig
from .gcn import TactileViewGCN, ViewGCNConfig
from .nn import Module
from .tensor import Tape, Tensor, branch_log, precision, same_branches
from .viewpoints import layout_viewpoints

logger = logging.getLogger(__name__)

STEP = 1e-4
TOLERANCE = 1e-3
SAMPLES_PER_PARAMETER = 20
# relative errors of gradients smaller than this are measured against it
ERROR_FLOOR = 1e-4

PARAMETER_GROUPS: List[Tuple[str, str]] = [
    ("relation", r"^gcn\.relation\."),
    ("local_weight", r"^gcn\.local\.\d+\.weight\."),
    ("local_psi", r"^gcn\.local\.\d+\.(affine|norm)\."),
    ("message_tau", r"^gcn\.messages\.\d+\.tau\."),
    ("fusion", r"^gcn\.messages\.\d+\.fuse(_norm)?\."),
    ("selectors", r"^gcn\.selectors\."),
    ("classifier", r"^gcn\.classifier\."),
    ("backbone_head", r"^backbone\.head\."),
    ("backbone", r"^backbone\."),
]


@dataclass
class GroupReport:
    """Worst relative error over the checked coordinates of one group."""

    name: str
    worst_error: float = 0.0
    checked: int = 0
    skipped: int = 0
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.worst_error < self.tolerance


def parameter_group(name: str) -> str:
    for group, pattern in PARAMETER_GROUPS:
        if re.match(pattern, name):
            return group
    return name.split(".")[0]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ERROR_FLOOR)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    group_of: Callable[[str], str],
    rng: np.random.Generator,
    samples: int = SAMPLES_PER_PARAMETER,
    step: float = STEP,
    tolerance: float = TOLERANCE,
) -> List[GroupReport]:
    """
    Compares backpropagated gradients with central differences.

    For every parameter up to ``samples`` random coordinates are perturbed by
    ``+-step``. A coordinate whose perturbation changes a discrete decision of the
    forward pass (an activation sign, a max-pool winner, a selected view) straddles
    a point where the loss is not differentiable and is skipped; at most
    ``4 * samples`` coordinates are tried.

    Parameters
    ----------
    loss_fn : Callable[[], Tensor]
        Recomputes the scalar loss from the current parameter values.
    params : Dict[str, Tensor]
        Parameters to check, by name.
    group_of : Callable[[str], str]
        Maps a parameter name to its report group.
    rng : np.random.Generator
        Chooses the coordinates.

    Returns
    -------
    List[GroupReport]
        One report per group, in order of first appearance.
    """
    for param in params.values():
        param.zero_grad()
    with Tape() as tape, branch_log() as reference:
        loss = loss_fn()
    tape.backward(loss)

    reports: Dict[str, GroupReport] = {}
    for name, param in params.items():
        report = reports.setdefault(group_of(name), GroupReport(group_of(name), tolerance=tolerance))
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)

        tried = 0
        checked = 0
        for flat in rng.permutation(param.size)[: 4 * samples]:
            if checked == samples:
                break
            tried += 1
            index = np.unravel_index(flat, param.shape)
            original = param.data[index]

            param.data[index] = original + step
            with branch_log() as plus:
                upper = loss_fn().item()
            param.data[index] = original - step
            with branch_log() as minus:
                lower = loss_fn().item()
            param.data[index] = original

            if not (same_branches(plus, reference) and same_branches(minus, reference)):
                report.skipped += 1
                continue
            numeric = (upper - lower) / (2 * step)
            report.worst_error = max(report.worst_error, relative_error(float(analytic[index]), numeric))
            checked += 1
        report.checked += checked
        logger.debug("%s: %d coordinates checked, %d tried", name, checked, tried)

    return list(reports.values())


@dataclass
class OpCase:
    """A primitive applied to random inputs, reduced to a scalar by a fixed weighting."""

    name: str
    apply: Callable[..., Tensor]
    shapes: Sequence[Tuple[int, ...]]
    positive: bool = False


def _cross_entropy(logits):
    return ops.softmax_cross_entropy(logits, [0, 2, 1])


def _masked(x):
    mask = np.array([[1, 1, 0, 0], [0, 1, 1, 0], [1, 0, 0, 1]], dtype=bool)
    return ops.masked_softmax(x, mask)


def _batch_norm(x, gamma, beta):
    features = x.shape[1]
    return ops.batch_norm(x, gamma, beta, np.zeros(features), np.ones(features), training=True)


OP_CASES: List[OpCase] = [
    OpCase("add", lambda a, b: ops.add(a, b), [(3, 4), (4,)]),
    OpCase("sub", lambda a, b: ops.sub(a, b), [(3, 4), (3, 1)]),
    OpCase("mul", lambda a, b: ops.mul(a, b), [(3, 4), (4,)]),
    OpCase("div", lambda a, b: ops.div(a, b), [(3, 4), (3, 4)], positive=True),
    OpCase("matmul", lambda a, b: ops.matmul(a, b), [(3, 5), (5, 2)]),
    OpCase("leaky_relu", lambda x: ops.leaky_relu(x, 0.01), [(4, 5)]),
    OpCase("transpose", lambda x: ops.transpose(x), [(3, 4)]),
    OpCase("expand", lambda x: ops.expand(x, (3, 2, 4)), [(2, 1)]),
    OpCase("concat", lambda a, b: ops.concat([a, b], axis=1), [(3, 2), (3, 4)]),
    OpCase("take", lambda x: ops.take(x, np.array([2, 0, 2])), [(4, 3)]),
    OpCase("sum", lambda x: ops.sum(x, axis=0), [(4, 3)]),
    OpCase("mean", lambda x: ops.mean(x, axis=1, keepdims=True), [(4, 3)]),
    OpCase("max_pool_rows", lambda x: ops.max_pool_rows(x), [(5, 3)]),
    OpCase("conv2d", lambda x, k: ops.conv2d(x, k, stride=2, padding=1), [(2, 2, 7, 7), (3, 2, 3, 3)]),
    OpCase("global_avg_pool", lambda x: ops.global_avg_pool(x), [(2, 3, 4, 4)]),
    OpCase("batch_norm", _batch_norm, [(4, 3), (3,), (3,)]),
    OpCase("softmax", lambda x: ops.softmax(x), [(3, 4)]),
    OpCase("masked_softmax", _masked, [(3, 4)]),
    OpCase("softmax_cross_entropy", _cross_entropy, [(3, 4)]),
]


def check_op(case: OpCase, rng: np.random.Generator, samples: int = SAMPLES_PER_PARAMETER) -> GroupReport:
    """Gradient check of one primitive; the report carries the op name."""
    inputs = []
    for shape in case.shapes:
        values = rng.normal(size=shape)
        inputs.append(Tensor(np.abs(values) + 0.5 if case.positive else values, requires_grad=True))

    output = case.apply(*inputs)
    weights = Tensor(rng.normal(size=output.shape))

    def loss_fn():
        return ops.sum(ops.mul(case.apply(*inputs), weights))

    params = {f"{case.name}.{i}": t for i, t in enumerate(inputs)}
    return check_gradients(loss_fn, params, lambda _: case.name, rng, samples)[0]


@dataclass
class GradcheckReport:
    groups: List[GroupReport]
    ops: List[GroupReport]

    @property
    def failures(self) -> List[GroupReport]:
        return [r for r in self.groups + self.ops if not r.passed]

    @property
    def passed(self) -> bool:
        return not self.failures


def _snapshot(model: Module) -> Dict[str, np.ndarray]:
    return {name: buffer.copy() for name, buffer in model.named_buffers()}


def _restore(model: Module, snapshot: Dict[str, np.ndarray]):
    for name, buffer in model.named_buffers():
        buffer[...] = snapshot[name]


def run_gradcheck(
    num_classes: int = 4,
    views: str = "cube8",
    seed: int = 0,
    samples: int = SAMPLES_PER_PARAMETER,
    tolerance: float = TOLERANCE,
) -> GradcheckReport:
    """
    Checks every primitive and every parameter group of a tiny model in double precision.

    The joint loss covers the hierarchy and the backbone; the pretraining head is
    checked through single-frame classification. Batch-norm running statistics are
    restored afterwards.
    """
    rng = np.random.default_rng(seed)
    coords = layout_viewpoints(views)

    with precision("float64"):
        op_reports = [check_op(case, rng, samples) for case in OP_CASES]
        for report in op_reports:
            report.tolerance = tolerance

        backbone_config = BackboneConfig.for_preset("tiny", num_classes)
        gcn_config = ViewGCNConfig(
            num_views=len(coords), feature_dim=backbone_config.feature_dim, num_classes=num_classes
        )
        model = TactileViewGCN(backbone_config, gcn_config, rng)
        model.train()
        snapshot = _snapshot(model)

        frames = Tensor(rng.uniform(0.0, 1.0, size=(len(coords), 1, 32, 32)))
        label = int(rng.integers(num_classes))

        def joint_loss():
            logits, trace = model(frames, coords)
            return model.loss(logits, trace, label)

        def head_loss():
            return ops.softmax_cross_entropy(model.backbone.classify(frames[:2]), [label, label])

        named = dict(model.named_parameters())
        head = {n: p for n, p in named.items() if parameter_group(n) == "backbone_head"}
        joint = {n: p for n, p in named.items() if n not in head}

        groups = check_gradients(joint_loss, joint, parameter_group, rng, samples, tolerance=tolerance)
        groups += check_gradients(head_loss, head, parameter_group, rng, samples, tolerance=tolerance)
        _restore(model, snapshot)

    for report in groups + op_reports:
        logger.info("%s: worst relative error %.2e over %d coordinates", report.name, report.worst_error, report.checked)
    return GradcheckReport(groups, op_reports)
