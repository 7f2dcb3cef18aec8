import matplotlib
import numpy as np
import pytest

from lib.config import RunConfig
from lib.data.clustering import cluster_dataset, write_clusters
from lib.data.io import save_dataset, split_directory
from lib.data.synth import class_templates, synth_generate

matplotlib.use("Agg")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config(tmp_path):
    """Settings small enough for a full synth -> train -> eval pass within seconds."""
    return RunConfig(
        dataset=str(tmp_path / "data"),
        out=str(tmp_path / "runs"),
        num_classes=3,
        frames_per_class=24,
        batch_size=4,
        epochs_backbone=1,
        epochs_gcn=2,
        selector_hidden=8,
    ).validate()


@pytest.fixture
def synthetic_splits(tiny_config):
    """Train and test splits of ``tiny_config`` written to disk and clustered."""
    templates = class_templates(tiny_config.num_classes, tiny_config.seed)
    counts = {"train": tiny_config.frames_per_class, "test": 16}
    datasets = {}
    for split, count in counts.items():
        dataset = synth_generate(tiny_config.num_classes, count, tiny_config.seed, split, templates)
        directory = split_directory(tiny_config.dataset, split)
        save_dataset(directory, dataset)
        assignments = cluster_dataset(dataset, tiny_config.num_views, tiny_config.seed)
        write_clusters(directory, assignments, tiny_config.num_views, tiny_config.seed)
        datasets[split] = dataset
    return datasets
