import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .backbone import Backbone, BackboneConfig
from .errors import ConfigurationError, EmptyInputError, ShapeError
from .nn import BatchNorm, Linear, Module
from .ops import concat, expand, leaky_relu, matmul, max_pool_rows, softmax, softmax_cross_entropy
from .sampling import Selection, furthest_point_sampling, selective_view_sample
from .tensor import Tensor, as_tensor
from .viewpoints import canonical_order, validate_viewpoints
from .ViewGraph import RelationMLP, knn_sparsify, learned_adjacency

logger = logging.getLogger(__name__)


@dataclass
class LevelState:
    """Node features, viewpoint coordinates and adjacency of one hierarchy level."""

    level: int
    features: Tensor
    coords: np.ndarray
    adjacency: Tensor

    @property
    def size(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class ViewGCNConfig:
    """Shape of the hierarchy and its layers."""

    num_views: int = 8
    feature_dim: int = 64
    num_classes: int = 26
    selector_hidden: int = 64
    levels: int = 3
    n_neighbors: int = 3
    slope: float = 0.01
    share_relation_mlp: bool = True
    fps_seed_index: int = 0
    view_loss_weight: float = 1.0

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigurationError(f"levels must be at least 1, got {self.levels}")
        if self.num_views < 2:
            raise ConfigurationError(f"num_views must be at least 2, got {self.num_views}")
        if not 1 <= self.n_neighbors <= self.num_views - 1:
            raise ConfigurationError(
                f"n_neighbors must lie in [1, {self.num_views - 1}], got {self.n_neighbors}"
            )
        if not 0 <= self.fps_seed_index < self.num_views:
            raise ConfigurationError(f"fps_seed_index {self.fps_seed_index} out of range")
        if self.view_loss_weight < 0:
            raise ConfigurationError("view_loss_weight must be non-negative")
        # batch norm over the nodes of the last level needs two of them
        if self.level_sizes()[-1] < 2:
            raise ConfigurationError(
                f"{self.levels} levels coarsen {self.num_views} views down to a single node"
            )

    def level_sizes(self) -> List[int]:
        """Node counts per level under the halving schedule, e.g. 8 -> 4 -> 2."""
        sizes = [self.num_views]
        for _ in range(self.levels - 1):
            sizes.append(math.ceil(sizes[-1] / 2))
        return sizes

    def neighbors_at(self, size: int) -> int:
        return min(self.n_neighbors, size - 1)


class LocalGraphConv(Module):
    """
    Local graph convolution ``F <- psi(A F W)``.

    ``psi`` is an affine layer, batch normalisation over the nodes and a LeakyReLU.
    Setting ``use_norm`` to False or ``slope`` to None drops the respective stage.
    """

    def __init__(self, feature_dim: int, rng: np.random.Generator, slope: Optional[float] = 0.01):
        self.weight = Linear(feature_dim, feature_dim, rng, bias=False)
        self.affine = Linear(feature_dim, feature_dim, rng)
        self.norm = BatchNorm(feature_dim)
        self.use_norm = True
        self.slope = slope

    def forward(self, state: LevelState) -> Tensor:
        features = as_tensor(state.features)
        if state.adjacency.shape != (len(features), len(features)):
            raise ShapeError(
                f"adjacency {state.adjacency.shape} does not match {len(features)} node features"
            )
        out = self.affine(matmul(state.adjacency, self.weight(features)))
        if self.use_norm:
            out = self.norm(out)
        return out if self.slope is None else leaky_relu(out, self.slope)


def local_graph_conv(state: LevelState, params: LocalGraphConv, training: bool = True) -> Tensor:
    """Runs `LocalGraphConv` in the requested mode."""
    params.train(training)
    return params(state)


class MessagePassing(Module):
    """
    Non-local message passing between every ordered pair of nodes.

    ``tau`` maps the concatenated pair ``[F_i, F_j]`` to a message; ``fuse`` maps
    ``[f_i, r_i]`` back to a node feature, followed by batch norm and LeakyReLU.
    """

    def __init__(self, feature_dim: int, rng: np.random.Generator, slope: Optional[float] = 0.01):
        self.tau = Linear(2 * feature_dim, feature_dim, rng)
        self.fuse = Linear(2 * feature_dim, feature_dim, rng)
        self.fuse_norm = BatchNorm(feature_dim)
        self.use_norm = True
        self.slope = slope
        self.message_slope = 0.01 if slope is None else slope

    def messages(self, features: Tensor) -> Tensor:
        n, d = features.shape
        senders = expand(features.reshape(n, 1, d), (n, n, d))
        receivers = expand(features.reshape(1, n, d), (n, n, d))
        pairs = concat([senders, receivers], axis=2).reshape(n * n, 2 * d)
        return leaky_relu(self.tau(pairs), self.message_slope).reshape(n, n, d)

    def fuse_messages(self, features: Tensor, messages: Tensor) -> Tensor:
        n, d = features.shape
        if messages.shape != (n, n, d):
            raise ShapeError(f"messages of shape {messages.shape} do not match features {features.shape}")

        # r_i sums the messages m_ji sent to node i
        received = messages.sum(axis=0)
        out = self.fuse(concat([features, received], axis=1))
        if self.use_norm:
            out = self.fuse_norm(out)
        return out if self.slope is None else leaky_relu(out, self.slope)

    def forward(self, features: Tensor) -> Tensor:
        return self.fuse_messages(features, self.messages(features))


def nonlocal_messages(features: Tensor, params: MessagePassing) -> Tensor:
    """Messages ``m_ij = tau([F_i, F_j])`` of shape (N, N, D)."""
    return params.messages(as_tensor(features))


def fuse_messages(features: Tensor, messages: Tensor, params: MessagePassing, training: bool = True) -> Tensor:
    """Fused node features ``f_i <- omega([f_i, sum_j m_ji])`` of shape (N, D)."""
    params.train(training)
    return params.fuse_messages(as_tensor(features), messages)


class ViewSelector(Module):
    """Per-slot classifier D -> d -> N_c used to rank neighbouring views."""

    def __init__(self, feature_dim: int, hidden: int, num_classes: int, rng: np.random.Generator, slope: float = 0.01):
        self.hidden = Linear(feature_dim, hidden, rng)
        self.out = Linear(hidden, num_classes, rng)
        self.slope = slope

    def forward(self, features: Tensor) -> Tensor:
        """Class logits for each row of ``features``."""
        return self.out(leaky_relu(self.hidden(features), self.slope))

    def probabilities(self, features: Tensor) -> Tensor:
        return softmax(self.forward(features))


@dataclass
class ForwardTrace:
    """Everything the hierarchy produced besides the logits."""

    level_sizes: List[int] = field(default_factory=list)
    pooled: List[Tensor] = field(default_factory=list)
    selections: List[Selection] = field(default_factory=list)
    descriptor: Optional[Tensor] = None

    @property
    def selector_logits(self) -> List[Tensor]:
        return [logits for selection in self.selections for logits in selection.selector_logits]

    @property
    def view_terms(self) -> int:
        return sum(len(logits) for logits in self.selector_logits)


class ViewGCN(Module):
    """
    Hierarchical aggregation of per-view features into a shape descriptor.

    Every level runs local graph convolution and max-pools the result into that
    level's part of the descriptor. Between levels, non-local message passing
    updates the nodes, FPS picks ``ceil(N / 2)`` centres, and selective view
    sampling chooses the new nodes, after which the adjacency is rebuilt from the
    new coordinates.
    """

    def __init__(self, config: ViewGCNConfig, rng: np.random.Generator):
        self.config = config
        sizes = config.level_sizes()
        relation_count = 1 if config.share_relation_mlp else config.levels
        self.relation = [RelationMLP(rng, config.slope) for _ in range(relation_count)]
        self.local = [LocalGraphConv(config.feature_dim, rng, config.slope) for _ in range(config.levels)]
        self.messages = [MessagePassing(config.feature_dim, rng, config.slope) for _ in range(config.levels - 1)]
        self.selectors = [
            [
                ViewSelector(config.feature_dim, config.selector_hidden, config.num_classes, rng, config.slope)
                for _ in range(sizes[level + 1])
            ]
            for level in range(config.levels - 1)
        ]
        self.classifier = Linear(config.levels * config.feature_dim, config.num_classes, rng)

    def _children(self):
        yield from super()._children()
        for level, slots in enumerate(self.selectors):
            for j, selector in enumerate(slots):
                yield f"selectors.{level}.{j}", selector

    def adjacency(self, level: int, coords: np.ndarray) -> Tensor:
        relation = self.relation[0 if self.config.share_relation_mlp else level]
        scores = learned_adjacency(coords, relation)
        return knn_sparsify(scores, coords, self.config.neighbors_at(len(coords)))

    def shape_descriptor(self, features: Tensor, coords: np.ndarray) -> Tuple[Tensor, ForwardTrace]:
        """
        Builds the concatenated multi-level descriptor.

        Parameters
        ----------
        features : Tensor
            Level-0 node features of shape (N, D), in the order of ``coords``.
        coords : np.ndarray
            Level-0 viewpoint coordinates of shape (N, 3).

        Returns
        -------
        Tuple[Tensor, ForwardTrace]
            The descriptor of length ``levels * D`` and the per-level trace.
        """
        features = as_tensor(features)
        coords = np.asarray(coords, dtype=np.float64)
        if features.shape != (self.config.num_views, self.config.feature_dim):
            raise ShapeError(
                f"expected features of shape {(self.config.num_views, self.config.feature_dim)}, got {features.shape}"
            )

        trace = ForwardTrace()
        state = LevelState(0, features, coords, self.adjacency(0, coords))
        for level in range(self.config.levels):
            trace.level_sizes.append(state.size)
            updated = self.local[level](state)
            trace.pooled.append(max_pool_rows(updated))
            if level == self.config.levels - 1:
                break

            fused = self.messages[level](updated)
            slots = self.selectors[level]
            seed = self.config.fps_seed_index if level == 0 else 0
            centres = furthest_point_sampling(state.coords, len(slots), seed)
            selection = selective_view_sample(
                LevelState(level, fused, state.coords, state.adjacency),
                centres,
                slots,
                self.config.neighbors_at(state.size),
            )
            trace.selections.append(selection)

            next_coords = selection.coords
            state = LevelState(
                level + 1,
                fused[selection.indices],
                next_coords,
                self.adjacency(level + 1, next_coords),
            )

        logger.debug("hierarchy level sizes %s", trace.level_sizes)
        trace.descriptor = concat(trace.pooled, axis=0)
        return trace.descriptor, trace

    def classify(self, descriptor: Tensor) -> Tensor:
        """Class logits from a descriptor of length ``levels * D``."""
        descriptor = as_tensor(descriptor)
        if descriptor.shape != (self.classifier.in_features,):
            raise ShapeError(
                f"descriptor of shape {descriptor.shape} does not match classifier input {self.classifier.in_features}"
            )
        return self.classifier(descriptor)

    def forward(self, features: Tensor, coords: np.ndarray) -> Tuple[Tensor, ForwardTrace]:
        descriptor, trace = self.shape_descriptor(features, coords)
        return self.classify(descriptor), trace


def shape_descriptor(level0: LevelState, model: ViewGCN) -> Tuple[Tensor, ForwardTrace]:
    """Descriptor of a level-0 state; the adjacency is rebuilt from its coordinates."""
    return model.shape_descriptor(level0.features, level0.coords)


def classify(descriptor: Tensor, model: ViewGCN) -> Tensor:
    return model.classify(descriptor)


def total_loss(
    logits: Tensor,
    selector_outputs: Optional[Sequence[Tensor]],
    label: int,
    expected_terms: Optional[int] = None,
    view_loss_weight: float = 1.0,
) -> Tensor:
    """
    Shape loss plus the weighted sum of every view-selector cross-entropy.

    Parameters
    ----------
    logits : Tensor
        Classifier output of length N_c.
    selector_outputs : Sequence[Tensor]
        Selector logits, one (K_j, N_c) tensor per slot; each row is one view term.
    label : int
        The true class.
    expected_terms : int, optional
        When given, the total number of view terms must match.
    view_loss_weight : float, optional
        Multiplies the view loss. Defaults to 1.

    Returns
    -------
    Tensor
        Scalar loss.

    Raises
    ------
    EmptyInputError
        If selector outputs are missing or fewer than expected.
    """
    if selector_outputs is None:
        raise EmptyInputError("total_loss needs the selector outputs of the forward pass")

    terms = sum(len(out) for out in selector_outputs)
    if expected_terms is not None and terms != expected_terms:
        raise EmptyInputError(f"expected {expected_terms} view-loss terms, got {terms}")

    loss = softmax_cross_entropy(logits, [label])
    for out in selector_outputs:
        # the cross-entropy is a mean over rows; scale back to a sum of terms
        view = softmax_cross_entropy(out, np.full(len(out), label)) * float(len(out) * view_loss_weight)
        loss = loss + view
    return loss


class TactileViewGCN(Module):
    """
    The full classifier: backbone features per frame, then the view hierarchy.

    Inputs are put into canonical order (viewpoints sorted lexicographically) before
    the backbone runs, so that permuting frames together with their viewpoints
    leaves every output bit-identical.
    """

    def __init__(self, backbone_config: BackboneConfig, gcn_config: ViewGCNConfig, rng: np.random.Generator):
        if backbone_config.feature_dim != gcn_config.feature_dim:
            raise ConfigurationError(
                f"backbone produces {backbone_config.feature_dim} features, hierarchy expects {gcn_config.feature_dim}"
            )
        self.backbone = Backbone(backbone_config, rng)
        self.gcn = ViewGCN(gcn_config, rng)

    def forward(self, frames, coords: np.ndarray) -> Tuple[Tensor, ForwardTrace]:
        frames, coords = canonicalize(frames, coords)
        return self.gcn(self.backbone(frames), coords)

    def loss(self, logits: Tensor, trace: ForwardTrace, label: int) -> Tensor:
        return total_loss(
            logits,
            trace.selector_logits,
            label,
            trace.view_terms,
            self.gcn.config.view_loss_weight,
        )

    def graph_parameters(self):
        return list(self.gcn.named_parameters("gcn."))


class MaxPoolClassifier(Module):
    """Baseline aggregator: backbone features max-pooled over views, then a linear head."""

    def __init__(self, backbone_config: BackboneConfig, rng: np.random.Generator):
        self.backbone = Backbone(backbone_config, rng)
        self.classifier = Linear(backbone_config.feature_dim, backbone_config.num_classes, rng)

    def forward(self, frames, coords: np.ndarray) -> Tuple[Tensor, ForwardTrace]:
        frames, coords = canonicalize(frames, coords)
        pooled = max_pool_rows(self.backbone(frames))
        return self.classifier(pooled), ForwardTrace([len(coords)], [pooled], [], pooled)

    def loss(self, logits: Tensor, trace: ForwardTrace, label: int) -> Tensor:
        return softmax_cross_entropy(logits, [label])

    def graph_parameters(self):
        return list(self.classifier.named_parameters("classifier."))


def canonicalize(frames, coords: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """Reorders (frame, viewpoint) pairs into lexicographic viewpoint order."""
    coords = validate_viewpoints(coords)
    frames = as_tensor(frames)
    if len(frames) != len(coords):
        raise ShapeError(f"{len(frames)} frames but {len(coords)} viewpoints")
    order = canonical_order(coords)
    if np.array_equal(order, np.arange(len(order))):
        return frames, coords
    return frames[order], coords[order]
