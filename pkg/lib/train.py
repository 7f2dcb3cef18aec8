import csv
import logging
import time
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .backbone import Backbone
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data.clustering import ClusterAssignment, cluster_dataset, read_clusters
from .data.io import TactileDataset
from .data.views import ViewSample, ViewSetSampler
from .errors import MissingClustersError
from .gcn import MaxPoolClassifier, TactileViewGCN
from .nn import Module
from .ops import softmax_cross_entropy
from .optim import SGD
from .tensor import Tape, Tensor

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bin"
METRICS_FILE = "metrics.csv"
EVAL_BATCH = 256


@dataclass
class MetricsRow:
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr_backbone: float
    lr_gcn: float
    wall_seconds: float


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


class MetricsWriter:
    """Appends `MetricsRow` records to a CSV file, writing the header for a new file."""

    def __init__(self, path: Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not (append and self.path.exists()):
            with open(self.path, "w", newline="", encoding="utf-8") as stream:
                csv.writer(stream).writerow(METRICS_HEADER)

    def write(self, row: MetricsRow):
        with open(self.path, "a", newline="", encoding="utf-8") as stream:
            csv.writer(stream).writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
        logger.info(
            "epoch %d %s: loss %.4f accuracy %.4f", row.epoch, row.split, row.loss, row.accuracy
        )


@dataclass
class EvalReport:
    """Accuracy per trial and the confusion matrix accumulated over all trials."""

    accuracies: List[float]
    losses: List[float]
    confusion: np.ndarray
    class_names: List[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def loss(self) -> float:
        return float(np.mean(self.losses))


def as_frames(frames: np.ndarray) -> Tensor:
    """(B, 32, 32) pressures as a (B, 1, 32, 32) tensor."""
    frames = np.asarray(frames)
    return Tensor(frames.reshape(len(frames), 1, *frames.shape[1:]))


def batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """
    Splits ``order`` into consecutive batches.

    A trailing batch of a single element is merged into the previous one, since batch
    normalisation needs two samples in training mode.
    """
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        last = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], last])
    return chunks


def build_model(config: RunConfig, rng: np.random.Generator) -> Module:
    """The stage-2 model selected by ``config.aggregator``."""
    if config.aggregator == "maxpool":
        return MaxPoolClassifier(config.backbone_config(), rng)
    return TactileViewGCN(config.backbone_config(), config.gcn_config(), rng)


def parameter_groups(model: Module) -> Tuple[Dict[str, Tensor], Dict[str, Tensor]]:
    """
    Backbone and graph parameters of a stage-2 model.

    The pretraining head ``backbone.head`` is not part of either group.
    """
    backbone, graph = {}, {}
    for name, param in model.named_parameters():
        if name.startswith("backbone.head."):
            continue
        (backbone if name.startswith("backbone.") else graph)[name] = param
    return backbone, graph


def _metadata(config: RunConfig, stage: str, epoch: int) -> dict:
    return {
        "stage": stage,
        "epoch": epoch,
        "seed": config.seed,
        "config": config.model_config(stage),
        "config_hash": config.config_hash(stage),
    }


def evaluate_backbone(backbone: Backbone, dataset: TactileDataset) -> Tuple[float, float]:
    """Mean cross-entropy and accuracy of single-frame classification, eval mode."""
    backbone.eval()
    total_loss, correct = 0.0, 0
    for start in range(0, len(dataset), EVAL_BATCH):
        stop = min(start + EVAL_BATCH, len(dataset))
        logits = backbone.classify(as_frames(dataset.frames[start:stop]))
        labels = dataset.labels[start:stop]
        total_loss += softmax_cross_entropy(logits, labels).item() * (stop - start)
        correct += int((logits.data.argmax(axis=1) == labels).sum())
    return total_loss / len(dataset), correct / len(dataset)


def train_backbone(config: RunConfig, dataset: TactileDataset, out_dir: Path) -> Backbone:
    """
    Stage 1: trains the backbone with its linear head on single frames.

    Writes ``metrics.csv`` (initial evaluation plus one row per epoch) and
    ``checkpoint.bin`` with its sidecar to ``out_dir``.
    """
    out_dir = Path(out_dir)
    backbone = Backbone(config.backbone_config(), np.random.default_rng(config.seed))
    optimizer = SGD(config.momentum, config.weight_decay)
    optimizer.add_group("backbone", dict(backbone.named_parameters()), config.lr_backbone_pretrain)
    metrics = MetricsWriter(out_dir / METRICS_FILE)

    started = time.perf_counter()
    loss, accuracy = evaluate_backbone(backbone, dataset)
    metrics.write(MetricsRow(0, "train", loss, accuracy, optimizer.learning_rate("backbone"), 0.0, 0.0))

    for epoch in range(1, config.epochs_backbone + 1):
        optimizer.set_epoch(epoch - 1, config.lr_decay_every)
        order = np.random.default_rng([config.seed, epoch]).permutation(len(dataset))
        backbone.train()
        total_loss, correct = 0.0, 0

        for batch in batches(order, config.batch_size):
            optimizer.zero_grad()
            labels = dataset.labels[batch]
            with Tape() as tape:
                logits = backbone.classify(as_frames(dataset.frames[batch]))
                loss = softmax_cross_entropy(logits, labels)
            tape.backward(loss)
            optimizer.step()

            total_loss += loss.item() * len(batch)
            correct += int((logits.data.argmax(axis=1) == labels).sum())

        metrics.write(
            MetricsRow(
                epoch,
                "train",
                total_loss / len(dataset),
                correct / len(dataset),
                optimizer.learning_rate("backbone"),
                0.0,
                time.perf_counter() - started,
            )
        )

    save_checkpoint(out_dir / CHECKPOINT_FILE, backbone, _metadata(config, "backbone", config.epochs_backbone))
    return backbone


def sample_loss(model: Module, sample: ViewSample, coords: np.ndarray) -> Tuple[Tensor, int]:
    """Total loss of one view set and the predicted class."""
    logits, trace = model(as_frames(sample.frames), coords)
    return model.loss(logits, trace, sample.label), int(np.argmax(logits.data))


def evaluate_samples(model: Module, samples: List[ViewSample], coords: np.ndarray, num_classes: int):
    """Mean loss, accuracy and confusion counts (rows true, columns predicted), eval mode."""
    model.eval()
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    total_loss = 0.0
    for sample in samples:
        loss, predicted = sample_loss(model, sample, coords)
        total_loss += loss.item()
        confusion[sample.label, predicted] += 1
    count = max(len(samples), 1)
    return total_loss / count, float(np.trace(confusion)) / count, confusion


def _sampler(config: RunConfig, dataset: TactileDataset, assignments) -> ViewSetSampler:
    return ViewSetSampler(dataset, config.num_views, None if config.unclustered else assignments)


def train_joint(
    config: RunConfig,
    dataset: TactileDataset,
    assignments: Optional[Dict[int, ClusterAssignment]],
    backbone_checkpoint: Path,
    out_dir: Path,
    resume: Optional[Path] = None,
) -> Module:
    """
    Stage 2: trains backbone and hierarchy jointly on view sets.

    The backbone starts from the stage-1 checkpoint; its head is not trained. Each
    sample runs its own forward and backward pass, gradients are averaged over the
    batch, and the backbone and graph groups follow their own learning rates. The
    draws of epoch ``e`` depend on ``(seed, e)`` only, so resuming from the
    checkpoint of epoch ``e - 1`` repeats epoch ``e`` exactly.
    """
    out_dir = Path(out_dir)
    if not config.unclustered and assignments is None:
        raise MissingClustersError("joint training needs cluster assignments; run the 'cluster' command first")

    model = build_model(config, np.random.default_rng(config.seed))
    backbone_group, graph_group = parameter_groups(model)
    optimizer = SGD(config.momentum, config.weight_decay)
    optimizer.add_group("backbone", backbone_group, config.lr_backbone)
    optimizer.add_group("gcn", graph_group, config.lr_gcn)

    coords = config.viewpoints()
    sampler = _sampler(config, dataset, assignments)
    started = time.perf_counter()

    if resume is not None:
        metadata = load_checkpoint(resume, model, optimizer, expected_config=config.model_config())
        first_epoch = int(metadata["epoch"]) + 1
        metrics = MetricsWriter(out_dir / METRICS_FILE, append=True)
        logger.info("resuming joint training after epoch %d", first_epoch - 1)
    else:
        load_checkpoint(
            backbone_checkpoint, model.backbone, expected_config=config.model_config("backbone")
        )
        first_epoch = 1
        metrics = MetricsWriter(out_dir / METRICS_FILE)
        loss, accuracy, _ = evaluate_samples(
            model, sampler.epoch(np.random.default_rng([config.seed, 0]), training=False), coords, config.num_classes
        )
        metrics.write(
            MetricsRow(0, "train", loss, accuracy, optimizer.learning_rate("backbone"), optimizer.learning_rate("gcn"), 0.0)
        )

    for epoch in range(first_epoch, config.epochs_gcn + 1):
        optimizer.set_epoch(epoch - 1, config.lr_decay_every)
        samples = sampler.epoch(np.random.default_rng([config.seed, epoch]), training=True)
        model.train()
        total_loss, correct = 0.0, 0

        for batch in batches(np.arange(len(samples)), config.batch_size):
            optimizer.zero_grad()
            for index in batch:
                with Tape() as tape:
                    loss, predicted = sample_loss(model, samples[index], coords)
                tape.backward(loss)
                total_loss += loss.item()
                correct += int(predicted == samples[index].label)
            optimizer.step(1.0 / len(batch))

        metrics.write(
            MetricsRow(
                epoch,
                "train",
                total_loss / len(samples),
                correct / len(samples),
                optimizer.learning_rate("backbone"),
                optimizer.learning_rate("gcn"),
                time.perf_counter() - started,
            )
        )
        save_checkpoint(out_dir / CHECKPOINT_FILE, model, _metadata(config, "joint", epoch), optimizer)

    return model


def trial_assignments(config: RunConfig, dataset: TactileDataset, split_dir: Path, trial: int):
    """
    Cluster assignments for evaluation trial ``trial``.

    Trial 0 uses the split's ``clusters.json`` when present; every other trial
    re-clusters with seed ``seed + trial``.
    """
    if config.unclustered:
        return None
    if trial == 0:
        try:
            return read_clusters(split_dir)
        except MissingClustersError:
            logger.info("no clusters in %s, clustering with seed %d", split_dir, config.seed)
    return cluster_dataset(dataset, config.num_views, config.seed + trial)


def evaluate(
    config: RunConfig,
    checkpoint: Path,
    dataset: TactileDataset,
    split_dir: Path,
    trials: int = 1,
) -> EvalReport:
    """
    Classifies view sets of the test split with a joint checkpoint.

    Each trial draws ``max(1, frames_in_class // k)`` view sets per class. The
    confusion matrix accumulates over trials.

    Raises
    ------
    CheckpointError
        When the checkpoint was trained with a different model configuration; the
        message names the field.
    """
    model = build_model(config, np.random.default_rng(config.seed))
    load_checkpoint(checkpoint, model, expected_config=config.model_config())
    coords = config.viewpoints()

    confusion = np.zeros((config.num_classes, config.num_classes), dtype=np.int64)
    report = EvalReport([], [], confusion, list(dataset.manifest.class_names))
    for trial in range(trials):
        sampler = _sampler(config, dataset, trial_assignments(config, dataset, split_dir, trial))
        samples = sampler.epoch(np.random.default_rng([config.seed, trial]), training=False)
        loss, accuracy, confusion = evaluate_samples(model, samples, coords, config.num_classes)
        report.accuracies.append(accuracy)
        report.losses.append(loss)
        report.confusion += confusion
        logger.info("trial %d: accuracy %.4f over %d view sets", trial, accuracy, len(samples))
    return report


def write_confusion_csv(path: Path, confusion: np.ndarray, class_names: List[str]):
    """Counts with rows as true classes and columns as predictions, after a header of class names."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = class_names or [str(c) for c in range(len(confusion))]
    np.savetxt(path, confusion, fmt="%d", delimiter=",", header=",".join(names), comments="")

