import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import softmax as np_softmax

from .errors import ConfigurationError, EmptyInputError, ShapeError
from .tensor import note_branch
from .ViewGraph import DISTANCE_DECIMALS, knn_indices

logger = logging.getLogger(__name__)


def furthest_point_sampling(coords: np.ndarray, m: int, seed_index: int = 0) -> List[int]:
    """
    Greedy max-min selection of ``m`` spread-out viewpoints.

    Starting from ``seed_index``, each step adds the viewpoint whose distance to the
    closest already selected viewpoint is largest. Distances are rounded before
    comparison and ties go to the lowest index.

    Parameters
    ----------
    coords : np.ndarray
        Viewpoint coordinates of shape (N, 3).
    m : int
        Number of viewpoints to select, ``1 <= m <= N``.
    seed_index : int, optional
        The first selected viewpoint. Defaults to 0.

    Returns
    -------
    List[int]
        Selected indices in selection order.

    Raises
    ------
    ConfigurationError
        If ``m`` or ``seed_index`` is out of range.
    """
    coords = np.asarray(coords, dtype=np.float64)
    count = len(coords)
    if not 1 <= m <= count:
        raise ConfigurationError(f"cannot sample {m} of {count} viewpoints")
    if not 0 <= seed_index < count:
        raise ConfigurationError(f"seed index {seed_index} out of range for {count} viewpoints")

    distances = np.round(cdist(coords, coords), DISTANCE_DECIMALS)
    selected = [seed_index]
    closest = distances[seed_index].copy()
    closest[seed_index] = -np.inf

    while len(selected) < m:
        # argmax returns the first maximum, i.e. the lowest index among ties
        nxt = int(np.argmax(closest))
        selected.append(nxt)
        closest = np.minimum(closest, distances[nxt])
        closest[selected] = -np.inf

    return selected


def neighborhood(coords: np.ndarray, center: int, n_neighbors: int) -> List[int]:
    """The center and its ``n_neighbors`` nearest viewpoints, in ascending index order."""
    if len(coords) == 0:
        raise EmptyInputError("cannot take a neighbourhood in an empty graph")
    nearest = knn_indices(coords, n_neighbors)[center] if n_neighbors > 0 else []
    return sorted([center, *[int(q) for q in nearest]])


@dataclass
class Selection:
    """Outcome of selective view sampling at one level."""

    indices: List[int]
    coords: np.ndarray
    neighborhoods: List[List[int]]
    # per slot: selector logits of shape (len(neighborhood), N_c)
    selector_logits: List = field(default_factory=list)
    # per slot: the max class probability of each neighbour
    scores: List[np.ndarray] = field(default_factory=list)


def pick_most_confident(max_probabilities: np.ndarray, candidates: Sequence[int]) -> int:
    """The candidate whose max class probability is largest; the first one wins ties."""
    if len(candidates) == 0:
        raise EmptyInputError("cannot select from an empty neighbourhood")
    return int(candidates[int(np.argmax(max_probabilities))])


def selective_view_sample(state, fps_indices: Sequence[int], selectors: Sequence, n_neighbors: int) -> Selection:
    """
    Replaces every FPS-sampled viewpoint by its most discriminative neighbour.

    For slot j the selector ``selectors[j]`` scores every viewpoint q in the
    neighbourhood of ``fps_indices[j]`` (the viewpoint itself plus its
    ``n_neighbors`` nearest). The neighbour with the largest maximum class
    probability becomes node j of the next level. Two slots may select the same
    neighbour.

    Parameters
    ----------
    state : LevelState
        Features, viewpoint coordinates and adjacency of the current level.
    fps_indices : Sequence[int]
        The sampled centres, one per slot.
    selectors : Sequence[ViewSelector]
        One selector per slot.
    n_neighbors : int
        Neighbours considered around each centre.

    Returns
    -------
    Selection
        Chosen indices and coordinates, plus the selector logits for the view loss.
    """
    if len(selectors) != len(fps_indices):
        raise ShapeError(f"{len(fps_indices)} sampled slots but {len(selectors)} view selectors")

    result = Selection(indices=[], coords=np.empty((0, 3)), neighborhoods=[])
    for center, selector in zip(fps_indices, selectors):
        candidates = neighborhood(state.coords, center, n_neighbors)
        logits = selector(state.features[candidates])
        max_probabilities = np_softmax(logits.data.astype(np.float64), axis=-1).max(axis=-1)

        result.indices.append(pick_most_confident(max_probabilities, candidates))
        result.neighborhoods.append(candidates)
        result.selector_logits.append(logits)
        result.scores.append(max_probabilities)

    note_branch("view_selection", result.indices)
    result.coords = np.asarray(state.coords)[result.indices]
    logger.debug("selective sampling %s -> %s", list(fps_indices), result.indices)
    return result
