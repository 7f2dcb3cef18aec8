import numpy as np
import pytest
from numpy.testing import assert_array_equal

from lib.data.synth import ClassTemplate, class_templates, render_blobs, synth_generate
from lib.errors import ConfigurationError


def test_fixed_seed_is_bit_identical():
    first = synth_generate(3, 10, seed=4)
    second = synth_generate(3, 10, seed=4)
    assert_array_equal(first.frames, second.frames)
    assert_array_equal(first.labels, second.labels)


def test_desk_scale_dataset_layout():
    dataset = synth_generate(4, 200, seed=0)
    assert dataset.frames.shape == (800, 32, 32)
    assert dataset.manifest.num_frames == 800
    assert dataset.manifest.num_classes == 4
    assert len(dataset.manifest.class_names) == 4
    assert_array_equal(dataset.labels, np.repeat(np.arange(4), 200))
    assert dataset.frames.dtype == np.float32
    assert dataset.frames.min() >= 0.0 and dataset.frames.max() <= 1.0


def test_class_means_are_separated():
    dataset = synth_generate(4, 200, seed=0)
    means = np.stack([dataset.frames[dataset.labels == c].mean(axis=0) for c in range(4)])
    spread = np.mean([dataset.frames[dataset.labels == c].std(axis=0).mean() for c in range(4)])
    for a in range(4):
        for b in range(a + 1, 4):
            assert np.linalg.norm(means[a] - means[b]) > 5 * spread


def test_splits_share_templates_but_not_frames():
    train = synth_generate(3, 8, seed=1, split="train")
    test = synth_generate(3, 8, seed=1, split="test")
    assert test.manifest.split == "test"
    assert not np.array_equal(train.frames, test.frames)
    # same class blobs, so class means stay close across splits
    for c in range(3):
        same = np.linalg.norm(train.frames[train.labels == c].mean(0) - test.frames[test.labels == c].mean(0))
        other = np.linalg.norm(train.frames[train.labels == c].mean(0) - test.frames[test.labels == (c + 1) % 3].mean(0))
        assert same < other


def test_templates_have_two_to_four_blobs():
    for template in class_templates(6, seed=2):
        assert 2 <= len(template.sigmas) <= 4
        assert template.centres.shape == (len(template.sigmas), 2)


def test_single_blob_peak():
    template = ClassTemplate(np.array([[10.0, 20.0]]), np.array([2.0]), np.array([0.7]))
    image = template.render()
    assert image.shape == (32, 32)
    assert np.unravel_index(np.argmax(image), image.shape) == (10, 20)
    assert image[10, 20] == pytest.approx(0.7)


def test_render_batches_frames():
    centres = np.array([[[5.0, 5.0]], [[25.0, 25.0]]])
    frames = render_blobs(centres, np.array([1.5]), np.ones((2, 1)))
    assert frames.shape == (2, 32, 32)
    assert frames[0, 5, 5] == pytest.approx(1.0) and frames[1, 25, 25] == pytest.approx(1.0)


@pytest.mark.parametrize("num_classes", [0, 1])
def test_needs_two_classes(num_classes):
    with pytest.raises(ConfigurationError):
        synth_generate(num_classes, 5, seed=0)


def test_rejects_unknown_split():
    with pytest.raises(ConfigurationError, match="split"):
        synth_generate(2, 5, seed=0, split="validation")
