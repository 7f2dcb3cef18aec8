import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..errors import CountMismatchError, FormatError, LabelError, NonFiniteDataError, PressureRangeError, ShapeError

logger = logging.getLogger(__name__)

FRAME_SIZE = 32
FRAME_CELLS = FRAME_SIZE * FRAME_SIZE
FORMAT_VERSION = 1

FRAMES_MAGIC = b"TVGF"
LABELS_MAGIC = b"TVGL"
EMPTY_HAND_MAGIC = b"TVGE"
SOURCES_MAGIC = b"TVGS"

SPLITS = ("train", "test")


def check_pressure_range(values: np.ndarray, what: str = "frames"):
    """
    Checks that ``values`` are normalised pressures.

    Raises
    ------
    PressureRangeError
        If any value lies outside [0, 1].
    """
    values = np.asarray(values)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise PressureRangeError(
            f"{what} must hold normalised pressures in [0, 1], got [{values.min():.4g}, {values.max():.4g}]"
        )


@dataclass
class TactileFrame:
    """One normalised 32x32 pressure image with its labels."""

    pressure: np.ndarray
    label: int
    source_index: int
    cluster_id: Optional[int] = None


@dataclass
class DatasetManifest:
    num_frames: int
    num_classes: int
    class_names: List[str]
    calib_min: float = 0.0
    calib_max: float = 1.0
    split: str = "train"
    version: int = FORMAT_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        payload = json.loads(text)
        version = payload.get("version")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported manifest version {version}")
        return cls(**payload)


@dataclass
class TactileDataset:
    """Frames of one split, normalised to [0, 1], with integer labels."""

    manifest: DatasetManifest
    frames: np.ndarray
    labels: np.ndarray
    empty_hand: Optional[np.ndarray] = None
    source_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (FRAME_SIZE, FRAME_SIZE):
            raise ShapeError(f"frames must have shape (M, 32, 32), got {self.frames.shape}")
        if len(self.labels) != len(self.frames):
            raise CountMismatchError(f"{len(self.frames)} frames but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.manifest.num_classes):
            raise LabelError(f"labels must lie in [0, {self.manifest.num_classes})")
        if self.source_indices is None:
            self.source_indices = np.arange(len(self.frames))
        self.source_indices = np.asarray(self.source_indices, dtype=np.int64)
        if len(self.source_indices) != len(self.frames):
            raise CountMismatchError(f"{len(self.frames)} frames but {len(self.source_indices)} source indices")
        # frames on the identity calibration are already normalised
        if self.manifest.calib_min == 0.0 and self.manifest.calib_max == 1.0:
            check_pressure_range(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def num_classes(self) -> int:
        return self.manifest.num_classes

    def frame(self, index: int) -> TactileFrame:
        return TactileFrame(self.frames[index], int(self.labels[index]), int(self.source_indices[index]))

    def class_indices(self, label: int) -> np.ndarray:
        """Positions of the frames of one class, ascending."""
        return np.flatnonzero(self.labels == label)

    def subset(self, mask: np.ndarray) -> "TactileDataset":
        manifest = DatasetManifest(**{**asdict(self.manifest), "num_frames": int(np.count_nonzero(mask))})
        return TactileDataset(manifest, self.frames[mask], self.labels[mask], self.empty_hand, self.source_indices[mask])


def normalize_pressure(values: np.ndarray, calib_min: float, calib_max: float) -> np.ndarray:
    """Maps raw values linearly from ``[calib_min, calib_max]`` onto [0, 1] and clips."""
    span = calib_max - calib_min
    if span <= 0:
        raise FormatError(f"calibration range [{calib_min}, {calib_max}] is empty")
    if calib_min == 0.0 and calib_max == 1.0:
        return np.clip(values, 0.0, 1.0).astype(np.float32)
    return np.clip((values - calib_min) / span, 0.0, 1.0).astype(np.float32)


def _write_block(path: Path, magic: bytes, count: Optional[int], payload: np.ndarray):
    with open(path, "wb") as stream:
        stream.write(magic)
        stream.write(struct.pack("<I", FORMAT_VERSION))
        if count is not None:
            stream.write(struct.pack("<I", count))
        stream.write(payload.tobytes())


def _read_block(path: Path, magic: bytes, dtype: str, with_count: bool = True):
    raw = Path(path).read_bytes()
    header = 12 if with_count else 8
    if len(raw) < header or raw[:4] != magic:
        raise FormatError(f"{path} does not start with magic {magic!r}")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise FormatError(f"{path} has unsupported version {version}")
    count = struct.unpack_from("<I", raw, 8)[0] if with_count else None
    if (len(raw) - header) % np.dtype(dtype).itemsize:
        raise CountMismatchError(f"{path} ends in the middle of a record")
    return count, np.frombuffer(raw[header:], dtype=dtype)


def write_frames(path: Path, frames: np.ndarray, magic: bytes = FRAMES_MAGIC):
    """Writes ``count`` row-major 32x32 float32 frames after the magic, version and count."""
    frames = np.ascontiguousarray(frames, dtype="<f4").reshape(-1, FRAME_CELLS)
    _write_block(path, magic, len(frames), frames)


def read_frames(path: Path, magic: bytes = FRAMES_MAGIC) -> np.ndarray:
    count, payload = _read_block(path, magic, "<f4")
    if payload.size != count * FRAME_CELLS:
        raise CountMismatchError(f"{path} declares {count} frames but holds {payload.size / FRAME_CELLS:g}")
    frames = payload.reshape(count, FRAME_SIZE, FRAME_SIZE).astype(np.float32)
    if not np.all(np.isfinite(frames)):
        raise NonFiniteDataError(f"{path} contains non-finite values")
    return frames


def save_dataset(directory: Path, dataset: TactileDataset):
    """
    Writes one split in the standard layout.

    ``manifest.json`` (UTF-8 JSON), ``frames.bin`` (magic ``TVGF``), ``labels.bin``
    (magic ``TVGL``, u16 labels), ``sources.bin`` (magic ``TVGS``, u32 positions of
    the frames in their source recording) and, when present, ``empty_hand.bin``
    (magic ``TVGE``, a single frame). Frames are written as given, i.e. in the raw
    scale described by the manifest's calibration range.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dataset.manifest.num_frames = len(dataset)

    (directory / "manifest.json").write_text(dataset.manifest.to_json(), encoding="utf-8")
    write_frames(directory / "frames.bin", dataset.frames)
    _write_block(directory / "labels.bin", LABELS_MAGIC, len(dataset), dataset.labels.astype("<u2"))
    _write_block(directory / "sources.bin", SOURCES_MAGIC, len(dataset), dataset.source_indices.astype("<u4"))
    if dataset.empty_hand is not None:
        _write_block(
            directory / "empty_hand.bin",
            EMPTY_HAND_MAGIC,
            None,
            np.ascontiguousarray(dataset.empty_hand, dtype="<f4").reshape(FRAME_CELLS),
        )
    logger.info("wrote %d frames to %s", len(dataset), directory)


def load_dataset(directory: Path) -> TactileDataset:
    """
    Reads one split and normalises the frames with the manifest calibration.

    Raises
    ------
    FormatError
        On bad magic bytes or versions.
    CountMismatchError
        When the payloads and the manifest disagree on the number of frames.
    NonFiniteDataError
        When a payload holds NaN or infinite values.
    """
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"{directory} has no manifest.json")
    manifest = DatasetManifest.from_json(manifest_path.read_text(encoding="utf-8"))

    frames = read_frames(directory / "frames.bin")
    count, labels = _read_block(directory / "labels.bin", LABELS_MAGIC, "<u2")
    if len(labels) != count:
        raise CountMismatchError(f"labels.bin declares {count} labels but holds {len(labels)}")
    if not len(frames) == len(labels) == manifest.num_frames:
        raise CountMismatchError(
            f"manifest lists {manifest.num_frames} frames, frames.bin {len(frames)}, labels.bin {len(labels)}"
        )

    empty_hand = None
    if (directory / "empty_hand.bin").exists():
        _, payload = _read_block(directory / "empty_hand.bin", EMPTY_HAND_MAGIC, "<f4", with_count=False)
        if payload.size != FRAME_CELLS:
            raise CountMismatchError("empty_hand.bin must hold exactly one frame")
        empty_hand = payload.reshape(FRAME_SIZE, FRAME_SIZE).astype(np.float32)

    source_indices = None
    if (directory / "sources.bin").exists():
        count, source_indices = _read_block(directory / "sources.bin", SOURCES_MAGIC, "<u4")
        if not count == len(source_indices) == len(frames):
            raise CountMismatchError(f"sources.bin holds {len(source_indices)} indices for {len(frames)} frames")

    frames = normalize_pressure(frames, manifest.calib_min, manifest.calib_max)
    logger.debug("loaded %d frames (%s) from %s", len(frames), manifest.split, directory)
    return TactileDataset(manifest, frames, labels.astype(np.int64), empty_hand, source_indices)


def split_directory(root: Path, split: str) -> Path:
    return Path(root) / split
