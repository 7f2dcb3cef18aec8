import functools
import logging
from dataclasses import fields
from pathlib import Path

import click
import numpy as np

from .checkpoint import load_checkpoint, read_metadata
from .config import RunConfig, load_config
from .data.clustering import cluster_dataset, read_clusters, write_clusters
from .data.io import SPLITS, load_dataset, save_dataset, split_directory
from .data.stag import convert_stag
from .data.synth import class_templates, synth_generate
from .errors import ConfigurationError, DatasetError, TactileGCNError
from .gradcheck import run_gradcheck
from .graphics.visualize import plot_confusion_matrix
from .train import CHECKPOINT_FILE, build_model, evaluate, train_backbone, train_joint, write_confusion_csv
from .viewpoints import write_viewpoints_csv
from .ViewGraph import ViewGraph

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def config_options(command):
    """Adds ``--config`` plus one long flag per `RunConfig` field, all defaulting to the file value."""
    for field in reversed(fields(RunConfig)):
        flag = field.name.replace("_", "-")
        if field.type in (bool, "bool"):
            option = click.option(f"--{flag}/--no-{flag}", field.name, default=None)
        else:
            kind = {"int": int, "float": float, "str": str}.get(field.type, field.type)
            option = click.option(f"--{flag}", field.name, type=kind, default=None, show_default=False)
        command = option(command)
    command = click.option(
        "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None
    )(command)
    return command


def stage(name: str):
    """Runs a command body, turning library errors into a ``[name]``-prefixed CLI error."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(config_path=None, **kwargs):
            overrides = {f.name: kwargs.pop(f.name) for f in fields(RunConfig) if f.name in kwargs}
            try:
                config = load_config(config_path, **overrides)
                return fn(config, **kwargs)
            except TactileGCNError as error:
                raise click.ClickException(f"[{name}] {error}") from error

        return wrapper

    return decorate


def _dataset_split(config: RunConfig, split: str):
    directory = split_directory(config.dataset, split)
    dataset = load_dataset(directory)
    if dataset.num_classes != config.num_classes:
        logger.info("using the %d classes of %s", dataset.num_classes, directory)
    return config.with_overrides(num_classes=dataset.num_classes), dataset, directory


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages.")
def cli(verbose: bool):
    """Tactile object classification with hierarchical view-graph networks."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)


@cli.command()
@config_options
@stage("synth")
def synth(config: RunConfig):
    """Generate a synthetic dataset with train and test splits."""
    templates = class_templates(config.num_classes, config.seed)
    counts = {"train": config.frames_per_class, "test": max(1, config.frames_per_class // 4)}
    for split in SPLITS:
        dataset = synth_generate(config.num_classes, counts[split], config.seed, split, templates)
        directory = split_directory(config.dataset, split)
        save_dataset(directory, dataset)
        click.echo(f"{split}: {len(dataset)} frames of {config.num_classes} classes -> {directory}")


@cli.command("convert-stag")
@click.argument("mat_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@config_options
@stage("convert-stag")
def convert_stag_command(config: RunConfig, mat_path: Path):
    """Convert the published glove recording (.mat) into the dataset layout."""
    for split, dataset in convert_stag(mat_path, config.dataset).items():
        click.echo(f"{split}: {len(dataset)} frames of {dataset.num_classes} classes")


@cli.command()
@config_options
@stage("cluster")
def cluster(config: RunConfig):
    """Cluster the frames of every class into one group per viewpoint."""
    found = False
    for split in SPLITS:
        directory = split_directory(config.dataset, split)
        if not (directory / "manifest.json").exists():
            continue
        found = True
        dataset = load_dataset(directory)
        assignments = cluster_dataset(dataset, config.num_views, config.seed)
        write_clusters(directory, assignments, config.num_views, config.seed)
        click.echo(f"{split}: {len(assignments)} classes x {config.num_views} clusters -> {directory}")
    if not found:
        raise DatasetError(f"no dataset split found under {config.dataset}")


@cli.command("train-backbone")
@config_options
@stage("train-backbone")
def train_backbone_command(config: RunConfig):
    """Stage 1: pretrain the backbone on single frames."""
    config, dataset, _ = _dataset_split(config, "train")
    out_dir = Path(config.out) / "backbone"
    train_backbone(config, dataset, out_dir)
    click.echo(f"backbone checkpoint -> {out_dir / CHECKPOINT_FILE}")


@cli.command()
@config_options
@click.option(
    "--backbone",
    "backbone_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Stage-1 checkpoint, defaults to OUT/backbone/checkpoint.bin.",
)
@click.option(
    "--resume",
    "resume_path",
    type=click.Path(exists=True, path_type=Path),
    default=None,
    help="Continue from a joint checkpoint.",
)
@stage("train")
def train(config: RunConfig, backbone_path, resume_path):
    """Stage 2: train backbone and view hierarchy jointly."""
    config, dataset, directory = _dataset_split(config, "train")
    assignments = None if config.unclustered else read_clusters(directory)
    backbone_path = backbone_path or Path(config.out) / "backbone" / CHECKPOINT_FILE
    out_dir = Path(config.out) / "joint"
    train_joint(config, dataset, assignments, backbone_path, out_dir, resume_path)
    click.echo(f"joint checkpoint -> {out_dir / CHECKPOINT_FILE}")


@cli.command("eval")
@config_options
@click.option(
    "--checkpoint",
    "checkpoint_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Joint checkpoint, defaults to OUT/joint/checkpoint.bin.",
)
@click.option(
    "--confusion",
    "confusion_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Confusion CSV, defaults to OUT/confusion.csv.",
)
@click.option(
    "--plot",
    "plot_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Also render the confusion matrix to this PNG.",
)
@stage("eval")
def evaluate_command(config: RunConfig, checkpoint_path, confusion_path, plot_path):
    """Classify view sets of the test split and write the confusion matrix."""
    config, dataset, directory = _dataset_split(config, "test")
    checkpoint_path = checkpoint_path or Path(config.out) / "joint" / CHECKPOINT_FILE
    report = evaluate(config, checkpoint_path, dataset, directory, config.trials)

    for trial, accuracy in enumerate(report.accuracies):
        click.echo(f"trial {trial}: accuracy {accuracy:.4f}")
    click.echo(f"accuracy {report.accuracy:.4f} over {len(report.accuracies)} trial(s)")

    confusion_path = confusion_path or Path(config.out) / "confusion.csv"
    write_confusion_csv(confusion_path, report.confusion, report.class_names)
    click.echo(f"confusion matrix -> {confusion_path}")
    if plot_path is not None:
        plot_confusion_matrix(report.confusion, report.class_names, plot_path)
        click.echo(f"confusion plot -> {plot_path}")


@cli.command()
@config_options
@click.option("--samples", type=int, default=20, show_default=True, help="Coordinates checked per parameter.")
@click.option("--tolerance", type=float, default=1e-3, show_default=True)
@stage("gradcheck")
def gradcheck(config: RunConfig, samples: int, tolerance: float):
    """Compare backpropagated gradients with finite differences on the tiny model."""
    report = run_gradcheck(config.num_classes, config.views, config.seed, samples, tolerance)

    click.echo(f"{'group':<24}{'worst rel. error':>18}{'checked':>10}{'skipped':>10}")
    for entry in report.groups + report.ops:
        status = click.style("PASS", fg="green") if entry.passed else click.style("FAIL", fg="red")
        click.echo(f"{entry.name:<24}{entry.worst_error:>18.2e}{entry.checked:>10}{entry.skipped:>10}  {status}")

    if not report.passed:
        names = ", ".join(entry.name for entry in report.failures)
        raise click.ClickException(f"[gradcheck] gradients disagree in: {names}")
    click.secho("all gradients agree", fg="green")


@cli.command("plot-graph")
@config_options
@click.option(
    "--checkpoint",
    "checkpoint_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Joint checkpoint, defaults to OUT/joint/checkpoint.bin.",
)
@click.option(
    "--png",
    "png_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Output image, defaults to OUT/view_graph.png.",
)
@stage("plot-graph")
def plot_graph(config: RunConfig, checkpoint_path, png_path):
    """Draw the learned level-0 view-graph of a checkpoint and export its viewpoints."""
    if config.aggregator != "viewgcn":
        raise ConfigurationError("only the viewgcn aggregator learns a view-graph")
    checkpoint_path = checkpoint_path or Path(config.out) / "joint" / CHECKPOINT_FILE
    trained = read_metadata(checkpoint_path).get("config", {})
    config = config.with_overrides(num_classes=trained.get("num_classes"))

    model = build_model(config, np.random.default_rng(config.seed))
    load_checkpoint(checkpoint_path, model, expected_config=config.model_config())
    coords = config.viewpoints()
    graph = ViewGraph(coords, model.gcn.relation[0], config.gcn_config().neighbors_at(len(coords)))

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_viewpoints_csv(out_dir / "viewpoints.csv", coords)
    png_path = png_path or out_dir / "view_graph.png"
    graph.plot(png_path)
    click.echo(f"view-graph of {len(graph)} viewpoints -> {png_path}")
