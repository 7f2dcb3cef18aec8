import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import ConfigurationError
from .io import FRAME_SIZE, SPLITS, DatasetManifest, TactileDataset

logger = logging.getLogger(__name__)

MIN_BLOBS, MAX_BLOBS = 2, 4
CENTRE_MARGIN = 5
SIGMA_RANGE = (1.5, 3.0)
AMPLITUDE_RANGE = (0.5, 0.9)

POSITION_JITTER = 2.0
AMPLITUDE_JITTER = 0.2
NOISE_SIGMA = 0.02

# minimal L2 distance between two rendered templates
MIN_TEMPLATE_DISTANCE = 2.0
MAX_TEMPLATE_ATTEMPTS = 1000

_ROWS, _COLS = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE].astype(np.float64)


@dataclass
class ClassTemplate:
    """Gaussian pressure blobs of one synthetic object: centres (B, 2), sigmas and amplitudes (B,)."""

    centres: np.ndarray
    sigmas: np.ndarray
    amplitudes: np.ndarray

    def render(self) -> np.ndarray:
        return render_blobs(self.centres[None], self.sigmas, self.amplitudes[None])[0]


def render_blobs(centres: np.ndarray, sigmas: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
    """
    Sums isotropic Gaussian blobs on the 32x32 grid.

    Parameters
    ----------
    centres : np.ndarray
        Blob centres (row, column) of shape (F, B, 2).
    sigmas : np.ndarray
        Blob widths of shape (B,).
    amplitudes : np.ndarray
        Blob peaks of shape (F, B).

    Returns
    -------
    np.ndarray
        Frames of shape (F, 32, 32).
    """
    rows = centres[..., 0, None, None]
    cols = centres[..., 1, None, None]
    widths = sigmas[None, :, None, None]
    blobs = np.exp(-((_ROWS - rows) ** 2 + (_COLS - cols) ** 2) / (2 * widths**2))
    return (amplitudes[..., None, None] * blobs).sum(axis=1)


def _random_template(rng: np.random.Generator) -> ClassTemplate:
    count = int(rng.integers(MIN_BLOBS, MAX_BLOBS + 1))
    return ClassTemplate(
        centres=rng.uniform(CENTRE_MARGIN, FRAME_SIZE - 1 - CENTRE_MARGIN, size=(count, 2)),
        sigmas=rng.uniform(*SIGMA_RANGE, size=count),
        amplitudes=rng.uniform(*AMPLITUDE_RANGE, size=count),
    )


def class_templates(num_classes: int, seed: int) -> List[ClassTemplate]:
    """
    Draws one blob arrangement per class.

    A candidate is rejected while its rendering lies closer than
    ``MIN_TEMPLATE_DISTANCE`` to an accepted template.
    """
    if num_classes < 2:
        raise ConfigurationError(f"a synthetic dataset needs at least 2 classes, got {num_classes}")

    rng = np.random.default_rng(seed)
    templates, renders = [], []
    attempts = 0
    while len(templates) < num_classes:
        attempts += 1
        if attempts > MAX_TEMPLATE_ATTEMPTS:
            raise ConfigurationError(f"could not draw {num_classes} distinct class templates")
        candidate = _random_template(rng)
        image = np.clip(candidate.render(), 0.0, 1.0)
        if all(np.linalg.norm(image - other) >= MIN_TEMPLATE_DISTANCE for other in renders):
            templates.append(candidate)
            renders.append(image)
    logger.debug("drew %d class templates in %d attempts", num_classes, attempts)
    return templates


def synth_frames(template: ClassTemplate, count: int, rng: np.random.Generator) -> np.ndarray:
    """Jittered, noisy renderings of one template, clipped to [0, 1]."""
    blobs = len(template.sigmas)
    centres = template.centres[None] + rng.uniform(-POSITION_JITTER, POSITION_JITTER, size=(count, blobs, 2))
    amplitudes = template.amplitudes[None] * rng.uniform(
        1 - AMPLITUDE_JITTER, 1 + AMPLITUDE_JITTER, size=(count, blobs)
    )
    frames = render_blobs(centres, template.sigmas, amplitudes)
    frames = frames + rng.normal(0.0, NOISE_SIGMA, size=frames.shape)
    return np.clip(frames, 0.0, 1.0).astype(np.float32)


def synth_generate(
    num_classes: int,
    frames_per_class: int,
    seed: int,
    split: str = "train",
    templates: Optional[List[ClassTemplate]] = None,
) -> TactileDataset:
    """
    Generates a synthetic tactile dataset.

    Class templates depend on ``seed`` only, so the train and test splits of one
    seed share their classes while their jitter comes from separate streams.

    Parameters
    ----------
    num_classes : int
        Number of object classes, at least 2.
    frames_per_class : int
        Frames generated per class.
    seed : int
        Seed of templates and jitter.
    split : str, optional
        Split tag, ``train`` or ``test``. Defaults to ``train``.
    templates : List[ClassTemplate], optional
        Reuses given templates instead of drawing them.

    Returns
    -------
    TactileDataset
        Class-major frames with calibration range [0, 1].
    """
    if split not in SPLITS:
        raise ConfigurationError(f"unknown split '{split}', expected one of {SPLITS}")
    if frames_per_class < 1:
        raise ConfigurationError(f"frames_per_class must be positive, got {frames_per_class}")
    if templates is None:
        templates = class_templates(num_classes, seed)
    if len(templates) != num_classes:
        raise ConfigurationError(f"{len(templates)} templates for {num_classes} classes")

    rng = np.random.default_rng([seed, SPLITS.index(split)])
    frames = np.concatenate([synth_frames(template, frames_per_class, rng) for template in templates])
    labels = np.repeat(np.arange(num_classes), frames_per_class)

    manifest = DatasetManifest(
        num_frames=len(frames),
        num_classes=num_classes,
        class_names=[f"class_{label:02d}" for label in range(num_classes)],
        split=split,
    )
    logger.info("generated %d synthetic %s frames for %d classes", len(frames), split, num_classes)
    return TactileDataset(manifest, frames, labels)
