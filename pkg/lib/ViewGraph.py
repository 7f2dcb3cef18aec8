import logging
from typing import List

import networkx as nx
import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, ShapeError
from .nn import Linear, Module
from .ops import leaky_relu, masked_softmax
from .tensor import Tensor
from .viewpoints import validate_viewpoints

logger = logging.getLogger(__name__)

RELATION_DIM = 10
HIDDEN_UNITS = 10
# distances are rounded before sorting so that geometric ties break by index
DISTANCE_DECIMALS = 9


def relation_vector(v_i, v_j) -> np.ndarray:
    """
    Relation between two viewpoints: ``[v_i, v_j, v_i - v_j, ||v_i - v_j||^2]``.

    Parameters
    ----------
    v_i, v_j : array_like
        Viewpoint coordinates of length 3.

    Returns
    -------
    np.ndarray
        Vector of length 10.
    """
    v_i = np.asarray(v_i, dtype=np.float64)
    v_j = np.asarray(v_j, dtype=np.float64)
    diff = v_i - v_j
    return np.concatenate([v_i, v_j, diff, [diff @ diff]])


def relation_vectors(coords: np.ndarray) -> np.ndarray:
    """Relation vectors of every ordered pair, shape (N, N, 10); entry (i, j) relates v_i to v_j."""
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    v_i = np.broadcast_to(coords[:, None, :], (n, n, 3))
    v_j = np.broadcast_to(coords[None, :, :], (n, n, 3))
    diff = v_i - v_j
    return np.concatenate([v_i, v_j, diff, (diff * diff).sum(axis=-1, keepdims=True)], axis=-1)


class RelationMLP(Module):
    """Three affine layers 10 -> 10 -> 10 -> 1 with LeakyReLU between them."""

    def __init__(self, rng: np.random.Generator, slope: float = 0.01):
        self.layers = [
            Linear(RELATION_DIM, HIDDEN_UNITS, rng),
            Linear(HIDDEN_UNITS, HIDDEN_UNITS, rng),
            Linear(HIDDEN_UNITS, 1, rng),
        ]
        self.slope = slope

    def forward(self, g: Tensor) -> Tensor:
        """Maps (M, 10) relation vectors to (M,) scores."""
        x = g
        for layer in self.layers[:-1]:
            x = leaky_relu(layer(x), self.slope)
        return self.layers[-1](x).reshape(-1)


def learned_adjacency(coords: np.ndarray, relation_mlp: RelationMLP) -> Tensor:
    """
    Scores ``S_ij = relation_mlp(relation_vector(v_i, v_j))`` for all ordered pairs.

    The diagonal is included. S is generally not symmetric because the relation
    vector depends on the order of the pair.

    Returns
    -------
    Tensor
        The (N, N) score matrix, differentiable with respect to the MLP.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"viewpoints must have shape (N, 3), got {coords.shape}")
    if len(coords) < 1:
        raise ConfigurationError("learned_adjacency needs at least one viewpoint")

    n = len(coords)
    pairs = Tensor(relation_vectors(coords).reshape(n * n, RELATION_DIM))
    return relation_mlp(pairs).reshape(n, n)


def knn_indices(coords: np.ndarray, n_neighbors: int) -> np.ndarray:
    """
    The ``n_neighbors`` nearest other viewpoints of every viewpoint.

    Euclidean distances are rounded and sorted stably, so equal distances resolve to
    the lower index.

    Returns
    -------
    np.ndarray
        Integer array of shape (N, n_neighbors), nearest first.
    """
    coords = np.asarray(coords, dtype=np.float64)
    distances = np.round(cdist(coords, coords), DISTANCE_DECIMALS)
    np.fill_diagonal(distances, np.inf)
    order = np.argsort(distances, axis=1, kind="stable")
    return order[:, :n_neighbors]


def _check_neighbors(n_neighbors: int, count: int):
    low = 0 if count == 1 else 1
    if not low <= n_neighbors <= count - 1:
        raise ConfigurationError(
            f"n_neighbors must lie in [{low}, {count - 1}] for {count} viewpoints, got {n_neighbors}"
        )


def knn_mask(coords: np.ndarray, n_neighbors: int) -> np.ndarray:
    """Boolean (N, N) mask holding each row's nearest neighbours plus the diagonal."""
    count = len(coords)
    _check_neighbors(n_neighbors, count)
    mask = np.eye(count, dtype=bool)
    rows = np.repeat(np.arange(count), n_neighbors)
    mask[rows, knn_indices(coords, n_neighbors).reshape(-1)] = True
    return mask


def knn_sparsify(scores: Tensor, coords: np.ndarray, n_neighbors: int) -> Tensor:
    """
    Keeps each row's self entry and its ``n_neighbors`` geometrically nearest
    viewpoints, then normalises the kept scores with a row softmax.

    Parameters
    ----------
    scores : Tensor
        Learned (N, N) scores.
    coords : np.ndarray
        Viewpoint coordinates of shape (N, 3).
    n_neighbors : int
        Neighbours kept per row, in ``[1, N - 1]`` (0 is accepted for a single node).

    Returns
    -------
    Tensor
        Row-stochastic adjacency with ``n_neighbors + 1`` positive entries per row.

    Raises
    ------
    ConfigurationError
        If ``n_neighbors`` is out of range.
    """
    if scores.shape != (len(coords), len(coords)):
        raise ShapeError(f"scores of shape {scores.shape} do not match {len(coords)} viewpoints")
    return masked_softmax(scores, knn_mask(coords, n_neighbors))


class ViewGraph:
    """A graph over viewpoints with learned, kNN-sparsified edge weights."""

    def __init__(self, viewpoints: np.ndarray, relation_mlp: RelationMLP, n_neighbors: int):
        """
        Builds the view-graph of a viewpoint layout.

        Parameters
        ----------
        viewpoints : np.ndarray
            Distinct viewpoint coordinates of shape (N, 3).
        relation_mlp : RelationMLP
            The network producing the edge scores.
        n_neighbors : int
            Neighbours kept per node.
        """
        self.viewpoints = validate_viewpoints(viewpoints)
        self.n_neighbors = n_neighbors
        self.scores = learned_adjacency(self.viewpoints, relation_mlp)
        self.adjacency = knn_sparsify(self.scores, self.viewpoints, n_neighbors)

    def __len__(self) -> int:
        return len(self.viewpoints)

    def neighbors(self, node: int) -> List[int]:
        """The retained off-diagonal neighbours of ``node``, nearest first."""
        return knn_indices(self.viewpoints, self.n_neighbors)[node].tolist()

    def to_networkx(self) -> nx.DiGraph:
        """
        Converts the graph to a weighted networkx digraph.

        Edge (i, j) carries the weight node i gives to node j's features, including
        self-loops.
        """
        G = nx.DiGraph()
        for i, coord in enumerate(self.viewpoints):
            G.add_node(i, pos=tuple(coord))
        adjacency = self.adjacency.data
        for i, j in zip(*np.nonzero(adjacency)):
            G.add_edge(int(i), int(j), weight=round(float(adjacency[i, j]), 3))
        return G

    def print(self):
        """Prints the viewpoints, scores and adjacency matrix."""
        print("============== ViewGraph =============")
        print("Viewpoints:")
        print(self.viewpoints)
        print("Scores:")
        print(np.round(self.scores.data, 4))
        print("Adjacency:")
        print(np.round(self.adjacency.data, 4))

    def plot(self, path=None):
        """
        Draws the graph with nodes projected onto the x/y plane of their viewpoints.

        Parameters
        ----------
        path : str or Path, optional
            Saves the figure there instead of showing it.
        """
        from .graphics.visualize import plot_view_graph

        plot_view_graph(self.to_networkx(), path)
