import numpy as np

from ..errors import ConfigurationError, ShapeError
from .io import FRAME_SIZE, TactileDataset, normalize_pressure

MIN_ACTIVE = 10
ACTIVE_THRESHOLD = 0.05


def baseline_subtract(
    frame_raw: np.ndarray,
    empty_hand_raw: np.ndarray,
    calib_min: float = 0.0,
    calib_max: float = 1.0,
) -> np.ndarray:
    """
    Removes the unloaded-glove signal from a raw frame.

    Computes ``max(frame - empty_hand, 0)``, normalises it with the calibration
    range and clips to [0, 1]. Negative differences carry no contact information.

    Parameters
    ----------
    frame_raw : np.ndarray
        A raw 32x32 frame (or a stack of them).
    empty_hand_raw : np.ndarray
        The raw 32x32 empty-hand frame.
    calib_min, calib_max : float, optional
        Raw values mapped to 0 and 1. Default to 0 and 1.

    Returns
    -------
    np.ndarray
        Pressures in [0, 1] with the shape of ``frame_raw``.
    """
    frame_raw = np.asarray(frame_raw, dtype=np.float64)
    empty_hand_raw = np.asarray(empty_hand_raw, dtype=np.float64)
    if frame_raw.shape[-2:] != (FRAME_SIZE, FRAME_SIZE) or empty_hand_raw.shape != (FRAME_SIZE, FRAME_SIZE):
        raise ShapeError(
            f"baseline subtraction needs 32x32 frames, got {frame_raw.shape} and {empty_hand_raw.shape}"
        )
    contact = np.maximum(frame_raw - empty_hand_raw, 0.0)
    return normalize_pressure(contact, calib_min, calib_max)


def informative_mask(frames: np.ndarray, min_active: int = MIN_ACTIVE, active_threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
    """True for frames with at least ``min_active`` cells above ``active_threshold``."""
    if min_active < 0 or active_threshold < 0:
        raise ConfigurationError("filter thresholds must be non-negative")
    frames = np.asarray(frames)
    active = (frames.reshape(len(frames), -1) > active_threshold).sum(axis=1)
    return active >= min_active


def filter_informative(frames: np.ndarray, min_active: int = MIN_ACTIVE, active_threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
    """Drops frames with too little contact; see `informative_mask`."""
    frames = np.asarray(frames)
    return frames[informative_mask(frames, min_active, active_threshold)]


def filter_dataset(dataset: TactileDataset, min_active: int = MIN_ACTIVE, active_threshold: float = ACTIVE_THRESHOLD) -> TactileDataset:
    """`filter_informative` applied to a dataset, keeping labels and source indices aligned."""
    return dataset.subset(informative_mask(dataset.frames, min_active, active_threshold))
