import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
import scipy.io

from ..errors import DatasetError
from .io import FRAME_SIZE, SPLITS, DatasetManifest, TactileDataset, save_dataset, split_directory
from .preprocess import baseline_subtract, informative_mask

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("pressure", "objectId", "splitId", "objects")
EMPTY_HAND = "empty_hand"
CALIBRATION_PERCENTILE = 99.9


def _object_names(raw) -> List[str]:
    return [str(np.squeeze(name)) for name in np.ravel(raw)]


def load_stag(mat_path: Path) -> Dict[str, np.ndarray]:
    """
    Reads the arrays of the published glove recording (``metadata.mat``).

    Raises
    ------
    DatasetError
        If the file misses one of ``pressure``, ``objectId``, ``splitId`` or
        ``objects``.
    """
    contents = scipy.io.loadmat(str(mat_path))
    missing = [key for key in REQUIRED_KEYS if key not in contents]
    if missing:
        raise DatasetError(
            f"{mat_path} lacks {missing}; expected the classification metadata file with keys {list(REQUIRED_KEYS)}"
        )

    pressure = np.asarray(contents["pressure"], dtype=np.float64)
    if pressure.ndim != 3 or pressure.shape[1:] != (FRAME_SIZE, FRAME_SIZE):
        raise DatasetError(f"pressure must have shape (M, 32, 32), got {pressure.shape}")
    return {
        "pressure": pressure,
        "object_id": np.ravel(contents["objectId"]).astype(np.int64),
        "split_id": np.ravel(contents["splitId"]).astype(np.int64),
        "objects": np.asarray(_object_names(contents["objects"]), dtype=object),
    }


def convert_stag(mat_path: Path, out_dir: Path) -> Dict[str, TactileDataset]:
    """
    Converts the glove recording into ``train/`` and ``test/`` splits.

    The empty-hand class becomes the baseline: its mean training frame is subtracted
    from every other frame, negative differences are clipped, and uninformative
    frames are dropped. The remaining objects are relabelled ``0..N_c-1`` in the
    order of the recording's object list. Split id 0 is training data, any other
    id test data.
    """
    raw = load_stag(mat_path)
    names = list(raw["objects"])
    if EMPTY_HAND not in names:
        raise DatasetError(f"no '{EMPTY_HAND}' object in {mat_path}, cannot subtract the baseline")
    empty_id = names.index(EMPTY_HAND)

    is_train = raw["split_id"] == 0
    empty_frames = raw["pressure"][(raw["object_id"] == empty_id) & is_train]
    if len(empty_frames) == 0:
        raise DatasetError("the training split holds no empty-hand frames")
    empty_hand = empty_frames.mean(axis=0)

    objects = [label for label in range(len(names)) if label != empty_id]
    relabel = {label: index for index, label in enumerate(objects)}
    class_names = [names[label] for label in objects]

    contact = np.maximum(raw["pressure"] - empty_hand, 0.0)
    calib_max = float(np.percentile(contact[is_train & (raw["object_id"] != empty_id)], CALIBRATION_PERCENTILE))
    if calib_max <= 0:
        raise DatasetError("the training frames carry no pressure above the empty-hand baseline")

    out_dir = Path(out_dir)
    datasets = {}
    for split in SPLITS:
        keep = (is_train if split == "train" else ~is_train) & (raw["object_id"] != empty_id)
        pressures = baseline_subtract(raw["pressure"][keep], empty_hand, 0.0, calib_max)
        mask = informative_mask(pressures)
        labels = np.array([relabel[label] for label in raw["object_id"][keep][mask]], dtype=np.int64)

        manifest = DatasetManifest(
            num_frames=int(mask.sum()),
            num_classes=len(class_names),
            class_names=class_names,
            calib_min=0.0,
            calib_max=calib_max,
            split=split,
        )
        sources = np.flatnonzero(keep)[mask]
        empty = empty_hand.astype(np.float32)
        # stored in the raw scale of the manifest, returned normalised like load_dataset
        stored = TactileDataset(manifest, contact[keep][mask], labels, empty, sources)
        save_dataset(split_directory(out_dir, split), stored)
        dataset = TactileDataset(manifest, pressures[mask], labels, empty, sources)
        datasets[split] = dataset
        logger.info("converted %d informative %s frames", len(dataset), split)
    return datasets
