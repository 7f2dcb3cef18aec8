import numpy as np
import pytest
from numpy.testing import assert_array_equal

from lib.data.clustering import ClusterAssignment
from lib.data.io import DatasetManifest, TactileDataset
from lib.data.views import ViewSetSampler, sample_unclustered_view_set, sample_view_set
from lib.errors import EmptyInputError, MissingClustersError


def _assignment(frame_clusters, cluster_to_viewpoint, label=0, frame_indices=None):
    frame_clusters = np.asarray(frame_clusters)
    if frame_indices is None:
        frame_indices = np.arange(len(frame_clusters))
    k = len(cluster_to_viewpoint)
    return ClusterAssignment(
        label, np.zeros((k, 1024)), np.asarray(frame_indices), frame_clusters, np.asarray(cluster_to_viewpoint)
    )


def _dataset(rng, per_class):
    frames = rng.uniform(size=(sum(per_class), 32, 32))
    labels = np.repeat(np.arange(len(per_class)), per_class)
    names = [f"object_{c}" for c in range(len(per_class))]
    return TactileDataset(DatasetManifest(len(frames), len(per_class), names), frames, labels)


def test_singleton_clusters_give_a_fixed_tuple(rng):
    assignment = _assignment([0, 1, 2], [2, 0, 1])
    frames = np.zeros((3, 32, 32))
    for _ in range(5):
        assert_array_equal(sample_view_set(frames, assignment, rng), [1, 2, 0])


def test_two_frame_cluster_is_sampled_uniformly(rng):
    assignment = _assignment([0, 0, 1], [0, 1])
    frames = np.zeros((3, 32, 32))
    draws = np.array([sample_view_set(frames, assignment, rng) for _ in range(1000)])
    assert draws.shape == (1000, 2)
    assert np.all(draws[:, 1] == 2)
    assert abs(np.mean(draws[:, 0] == 0) - 0.5) <= 0.05


def test_empty_cluster(rng):
    with pytest.raises(EmptyInputError, match="empty"):
        sample_view_set(np.zeros((2, 32, 32)), _assignment([0, 0], [0, 1]), rng)


def test_unclustered_draw_without_replacement(rng):
    indices = np.arange(10, 20)
    for _ in range(20):
        drawn = sample_unclustered_view_set(indices, 8, rng)
        assert len(set(drawn.tolist())) == 8
        assert set(drawn.tolist()) <= set(indices.tolist())
    with pytest.raises(EmptyInputError):
        sample_unclustered_view_set(indices[:3], 8, rng)


def test_samples_per_class(rng):
    dataset = _dataset(rng, [10, 12, 3])
    sampler = ViewSetSampler(dataset, 4)
    assert [sampler.samples_per_class(c, training=True) for c in range(3)] == [3, 3, 1]
    assert [sampler.samples_per_class(c, training=False) for c in range(3)] == [2, 3, 1]


def test_clustered_epoch(rng):
    dataset = _dataset(rng, [8, 8])
    assignments = {
        label: _assignment(np.arange(8) % 4, [3, 2, 1, 0], label, dataset.class_indices(label)) for label in (0, 1)
    }
    sampler = ViewSetSampler(dataset, 4, assignments)
    samples = sampler.epoch(rng, training=True)
    assert len(samples) == 4
    assert sorted(sample.label for sample in samples) == [0, 0, 1, 1]
    for sample in samples:
        assert sample.frames.shape == (4, 32, 32)
        # viewpoint v holds a frame of cluster 3 - v
        assert_array_equal((sample.source_indices % 8) % 4, [3, 2, 1, 0])
        assert np.all(dataset.labels[sample.source_indices] == sample.label)
        assert_array_equal(sample.frames, dataset.frames[sample.source_indices])


def test_evaluation_pass_is_label_ordered(rng):
    dataset = _dataset(rng, [8, 12])
    samples = ViewSetSampler(dataset, 4).epoch(rng, training=False)
    assert [sample.label for sample in samples] == [0, 0, 1, 1, 1]


def test_missing_class_assignment(rng):
    dataset = _dataset(rng, [4, 4])
    with pytest.raises(MissingClustersError, match="cluster"):
        ViewSetSampler(dataset, 4, {0: _assignment(np.arange(4), [0, 1, 2, 3])})
