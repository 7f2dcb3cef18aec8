import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List

import numpy as np

from ..errors import EmptyInputError, MissingClustersError
from .clustering import ClusterAssignment
from .io import TactileDataset

logger = logging.getLogger(__name__)


@dataclass
class ViewSample:
    """One training or evaluation sample: N frames in viewpoint order and a label."""

    frames: np.ndarray
    label: int
    source_indices: np.ndarray


def sample_view_set(frames: np.ndarray, assignment: ClusterAssignment, rng: np.random.Generator) -> np.ndarray:
    """
    Draws one frame per cluster, uniformly, ordered by viewpoint index.

    Parameters
    ----------
    frames : np.ndarray
        The frames of the split the assignment refers to; ``assignment.frame_indices``
        index into it.
    assignment : ClusterAssignment
        Clusters of one class.
    rng : np.random.Generator
        Source of the draws.

    Returns
    -------
    np.ndarray
        Positions in ``frames`` of the chosen frames, one per viewpoint.

    Raises
    ------
    EmptyInputError
        If a cluster has no frames.
    """
    chosen = []
    for viewpoint, members in enumerate(assignment.members_by_viewpoint()):
        if len(members) == 0:
            raise EmptyInputError(f"cluster of viewpoint {viewpoint} in class {assignment.label} is empty")
        chosen.append(int(members[rng.integers(len(members))]))
    return np.asarray(chosen, dtype=np.int64)


def sample_unclustered_view_set(class_indices: np.ndarray, num_views: int, rng: np.random.Generator) -> np.ndarray:
    """Draws ``num_views`` frames of a class without replacement, viewpoints in draw order."""
    if len(class_indices) < num_views:
        raise EmptyInputError(f"{len(class_indices)} frames cannot fill {num_views} viewpoints")
    return np.asarray(rng.choice(class_indices, size=num_views, replace=False), dtype=np.int64)


class ViewSetSampler:
    """
    Produces the view sets of one epoch or evaluation pass.

    Classes are visited in label order and the resulting list is shuffled for
    training. With ``assignments`` set to None frames are drawn without clustering.
    """

    def __init__(self, dataset: TactileDataset, num_views: int, assignments: Dict[int, ClusterAssignment] = None):
        self.dataset = dataset
        self.num_views = num_views
        self.assignments = assignments
        if assignments is not None:
            missing = [label for label in range(dataset.num_classes) if label not in assignments]
            if missing:
                raise MissingClustersError(f"no cluster assignment for classes {missing}; run the 'cluster' command")

    def draw(self, label: int, rng: np.random.Generator) -> ViewSample:
        if self.assignments is None:
            positions = sample_unclustered_view_set(self.dataset.class_indices(label), self.num_views, rng)
        else:
            positions = sample_view_set(self.dataset.frames, self.assignments[label], rng)
        return ViewSample(self.dataset.frames[positions], label, self.dataset.source_indices[positions])

    def samples_per_class(self, label: int, training: bool) -> int:
        count = len(self.dataset.class_indices(label))
        if training:
            return math.ceil(count / self.num_views)
        return max(1, count // self.num_views)

    def epoch(self, rng: np.random.Generator, training: bool = True) -> List[ViewSample]:
        samples = [
            self.draw(label, rng)
            for label in range(self.dataset.num_classes)
            for _ in range(self.samples_per_class(label, training))
        ]
        if training:
            samples = [samples[i] for i in rng.permutation(len(samples))]
        logger.debug("drew %d view sets", len(samples))
        return samples

    def __iter__(self) -> Iterator[ViewSample]:
        return iter(self.epoch(np.random.default_rng(0), training=False))
