import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ConfigurationError, EmptyInputError, FormatError, MissingClustersError
from .io import FORMAT_VERSION, TactileDataset, read_frames, write_frames

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
TOLERANCE = 1e-4

CLUSTERS_FILE = "clusters.json"
CENTROIDS_FILE = "centroids.bin"


@dataclass
class ClusterAssignment:
    """
    k-means clusters of one object class and their viewpoints.

    ``frame_clusters[i]`` is the cluster of frame ``frame_indices[i]`` (positions in
    the split); ``cluster_to_viewpoint[c]`` is the viewpoint index of cluster c.
    """

    label: int
    centroids: np.ndarray
    frame_indices: np.ndarray
    frame_clusters: np.ndarray
    cluster_to_viewpoint: np.ndarray
    objective_history: List[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.frame_clusters, minlength=self.k)

    def members_by_viewpoint(self) -> List[np.ndarray]:
        """Split positions of each viewpoint's frames, ordered by viewpoint index."""
        by_cluster = {c: self.frame_indices[self.frame_clusters == c] for c in range(self.k)}
        order = np.argsort(self.cluster_to_viewpoint)
        return [by_cluster[int(c)] for c in order]


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    k-means++ seeding: the first centre uniformly, then each next centre with
    probability proportional to its squared distance from the nearest chosen one.
    """
    centres = [int(rng.integers(len(points)))]
    closest = cdist(points, points[centres], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(len(points), p=closest / total))
        else:
            remaining = np.setdiff1d(np.arange(len(points)), centres)
            nxt = int(rng.choice(remaining))
        centres.append(nxt)
        closest = np.minimum(closest, cdist(points, points[[nxt]], "sqeuclidean")[:, 0])
    return points[centres].copy()


def lloyd(points: np.ndarray, centroids: np.ndarray, max_iterations: int = MAX_ITERATIONS, tolerance: float = TOLERANCE):
    """
    Lloyd iterations until no centroid moves more than ``tolerance``.

    An emptied cluster is re-seeded with the point furthest from its centroid among
    the clusters holding more than one point, which never increases the objective
    and never empties another cluster.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray, List[float]]
        Centroids, assignments, and the objective after each assignment step.
    """
    k = len(centroids)
    if len(points) < k:
        raise EmptyInputError(f"{len(points)} points cannot fill {k} clusters")
    history = []
    for iteration in range(max_iterations):
        distances = cdist(points, centroids, "sqeuclidean")
        assignment = np.argmin(distances, axis=1)
        point_cost = distances[np.arange(len(points)), assignment]

        sizes = np.bincount(assignment, minlength=k)
        for c in np.flatnonzero(sizes == 0):
            # only clusters that keep a member may give one up
            donors = sizes[assignment] > 1
            furthest = int(np.argmax(np.where(donors, point_cost, -1.0)))
            sizes[assignment[furthest]] -= 1
            sizes[c] = 1
            assignment[furthest] = c
            point_cost[furthest] = 0.0
        history.append(float(point_cost.sum()))

        updated = np.stack([points[assignment == c].mean(axis=0) for c in range(k)])
        shift = np.linalg.norm(updated - centroids, axis=1).max()
        centroids = updated
        if shift < tolerance:
            logger.debug("k-means converged after %d iterations", iteration + 1)
            break

    return centroids, assignment, history


def cluster_frames(frames: np.ndarray, k: int, seed: int, label: int = 0, frame_indices=None) -> ClusterAssignment:
    """
    Groups the frames of one class into ``k`` pseudo-viewpoints with k-means.

    Frames are flattened to 1024-dimensional vectors. Clusters are mapped to
    viewpoints by descending size, ties by cluster index.

    Parameters
    ----------
    frames : np.ndarray
        Frames of a single class, shape (M, 32, 32).
    k : int
        Number of clusters, equal to the number of viewpoints.
    seed : int
        Seed of the k-means++ initialisation.

    Raises
    ------
    EmptyInputError
        If the class has fewer than ``k`` distinct frames.
    """
    points = np.asarray(frames, dtype=np.float64).reshape(len(frames), -1)
    if k < 1:
        raise ConfigurationError(f"k must be positive, got {k}")
    if len(points) < k:
        raise EmptyInputError(f"class {label} has {len(points)} frames, fewer than k={k}")
    distinct = len(np.unique(points, axis=0))
    if distinct < k:
        raise EmptyInputError(f"class {label} has {distinct} distinct frames, fewer than k={k}")

    rng = np.random.default_rng(seed)
    centroids, assignment, history = lloyd(points, kmeans_plus_plus(points, k, rng))

    sizes = np.bincount(assignment, minlength=k)
    by_size = sorted(range(k), key=lambda c: (-sizes[c], c))
    cluster_to_viewpoint = np.empty(k, dtype=np.int64)
    cluster_to_viewpoint[by_size] = np.arange(k)

    if frame_indices is None:
        frame_indices = np.arange(len(points))
    return ClusterAssignment(
        label,
        centroids,
        np.asarray(frame_indices, dtype=np.int64),
        assignment.astype(np.int64),
        cluster_to_viewpoint,
        history,
    )


def cluster_dataset(dataset: TactileDataset, k: int, seed: int) -> Dict[int, ClusterAssignment]:
    """Clusters every class of a split; class ``c`` uses seed ``seed + c``."""
    assignments = {}
    for label in range(dataset.num_classes):
        indices = dataset.class_indices(label)
        if len(indices) < k:
            name = dataset.manifest.class_names[label] if label < len(dataset.manifest.class_names) else label
            raise EmptyInputError(f"class '{name}' has {len(indices)} frames, fewer than k={k}")
        assignments[label] = cluster_frames(dataset.frames[indices], k, seed + label, label, indices)
    logger.info("clustered %d classes into %d clusters each", len(assignments), k)
    return assignments


def write_clusters(directory: Path, assignments: Dict[int, ClusterAssignment], k: int, seed: int):
    """Writes ``clusters.json`` and the class-major ``centroids.bin`` next to a split."""
    directory = Path(directory)
    classes = []
    centroids = []
    for label in sorted(assignments):
        assignment = assignments[label]
        classes.append(
            {
                "label": label,
                "centroid_offset": len(centroids) * k,
                "frame_indices": assignment.frame_indices.tolist(),
                "frame_clusters": assignment.frame_clusters.tolist(),
                "cluster_to_viewpoint": assignment.cluster_to_viewpoint.tolist(),
                "cluster_sizes": assignment.cluster_sizes.tolist(),
            }
        )
        centroids.append(assignment.centroids)

    payload = {"version": FORMAT_VERSION, "k": k, "seed": seed, "classes": classes}
    (directory / CLUSTERS_FILE).write_text(json.dumps(payload, indent=1), encoding="utf-8")
    write_frames(directory / CENTROIDS_FILE, np.concatenate(centroids).astype(np.float32))


def read_clusters(directory: Path) -> Dict[int, ClusterAssignment]:
    """
    Reads the assignments written by `write_clusters`.

    Raises
    ------
    MissingClustersError
        If the split has no ``clusters.json``.
    """
    directory = Path(directory)
    path = directory / CLUSTERS_FILE
    if not path.exists():
        raise MissingClustersError(f"{directory} has no {CLUSTERS_FILE}; run the 'cluster' command first")

    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path} has unsupported version {payload.get('version')}")

    k = payload["k"]
    centroids = read_frames(directory / CENTROIDS_FILE).reshape(-1, 1024)
    assignments = {}
    for entry in payload["classes"]:
        offset = entry["centroid_offset"]
        assignments[entry["label"]] = ClusterAssignment(
            entry["label"],
            centroids[offset : offset + k].astype(np.float64),
            np.asarray(entry["frame_indices"], dtype=np.int64),
            np.asarray(entry["frame_clusters"], dtype=np.int64),
            np.asarray(entry["cluster_to_viewpoint"], dtype=np.int64),
        )
    return assignments
