import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Dict, Optional, Tuple

import numpy as np

from .errors import CheckpointError
from .nn import Module
from .optim import SGD

logger = logging.getLogger(__name__)

MAGIC = b"TVGC"
VERSION = 1
OPTIM_PREFIX = "optim."


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    chunk = stream.read(size)
    if len(chunk) != size:
        raise CheckpointError("checkpoint is truncated")
    return chunk


def _read_u32(stream: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(stream, 4))[0]


def write_tensors(path: Path, tensors: Dict[str, np.ndarray]):
    """
    Writes named arrays to a checkpoint container.

    The layout is the magic ``TVGC``, a u32 version, a u32 tensor count, then per
    tensor: u32 name length, UTF-8 name, u32 rank, u32 dims, and the little-endian
    float32 payload. All integers are little-endian.
    """
    with open(path, "wb") as stream:
        stream.write(MAGIC)
        stream.write(struct.pack("<II", VERSION, len(tensors)))
        for name, array in tensors.items():
            encoded = name.encode("utf-8")
            array = np.asarray(array)
            stream.write(struct.pack("<I", len(encoded)))
            stream.write(encoded)
            stream.write(struct.pack("<I", array.ndim))
            stream.write(struct.pack(f"<{array.ndim}I", *array.shape))
            stream.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_tensors(path: Path) -> Dict[str, np.ndarray]:
    """Reads a container written by `write_tensors`; arrays come back as float32."""
    tensors = {}
    with open(path, "rb") as stream:
        if _read_exact(stream, 4) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
        version = _read_u32(stream)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")

        for _ in range(_read_u32(stream)):
            name = _read_exact(stream, _read_u32(stream)).decode("utf-8")
            rank = _read_u32(stream)
            shape = struct.unpack(f"<{rank}I", _read_exact(stream, 4 * rank))
            count = int(np.prod(shape, dtype=np.int64))
            payload = _read_exact(stream, 4 * count)
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)

    return tensors


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def read_metadata(path: Path) -> dict:
    """The sidecar JSON of a checkpoint, or an empty dict when it has none."""
    side = sidecar_path(path)
    return json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}


def save_checkpoint(
    path: Path,
    model: Module,
    metadata: dict,
    optimizer: Optional[SGD] = None,
):
    """
    Saves parameters, batch-norm statistics and optional optimizer velocities.

    The JSON sidecar next to the binary file records ``metadata`` (epoch, seed,
    config hash, stage).
    """
    path = Path(path)
    tensors = {name: p.data for name, p in model.named_parameters()}
    tensors.update(dict(model.named_buffers()))
    if optimizer is not None:
        tensors.update({OPTIM_PREFIX + name: v for name, v in optimizer.state_dict().items()})

    path.parent.mkdir(parents=True, exist_ok=True)
    write_tensors(path, tensors)
    sidecar_path(path).write_text(json.dumps(metadata, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("checkpoint written to %s (%d tensors)", path, len(tensors))


def load_checkpoint(
    path: Path,
    model: Module,
    optimizer: Optional[SGD] = None,
    strict: bool = True,
    expected_config: Optional[dict] = None,
) -> dict:
    """
    Restores a checkpoint into ``model`` (and ``optimizer``) and returns its metadata.

    Parameters
    ----------
    path : Path
        The binary checkpoint; its sidecar must sit next to it.
    model : Module
        Receives parameters and buffers by name.
    optimizer : SGD, optional
        Receives velocities when present.
    strict : bool, optional
        Require every model tensor to be present. Defaults to True.
    expected_config : dict, optional
        Model-shaping settings the sidecar's ``config`` entry must equal.

    Raises
    ------
    CheckpointError
        On missing tensors, shape mismatches or a differing configuration field.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")

    metadata = read_metadata(path)
    if expected_config is not None:
        stored = metadata.get("config", {})
        for key in sorted(expected_config):
            if stored.get(key) != expected_config[key]:
                raise CheckpointError(
                    f"checkpoint {path} does not match the configuration: field '{key}' is "
                    f"{stored.get(key)!r} in the checkpoint and {expected_config[key]!r} in the config"
                )

    tensors = read_tensors(path)
    targets: Dict[str, Tuple[str, object]] = {name: ("param", p) for name, p in model.named_parameters()}
    targets.update({name: ("buffer", b) for name, b in model.named_buffers()})

    for name, (kind, target) in targets.items():
        if name not in tensors:
            if strict:
                raise CheckpointError(f"checkpoint {path} lacks tensor '{name}'")
            continue
        value = tensors[name]
        current = target.data if kind == "param" else target
        if value.shape != current.shape:
            raise CheckpointError(
                f"tensor '{name}' has shape {value.shape} in {path}, model expects {current.shape}"
            )
        current[...] = value

    if optimizer is not None:
        velocities = {
            name[len(OPTIM_PREFIX):]: value
            for name, value in tensors.items()
            if name.startswith(OPTIM_PREFIX)
        }
        optimizer.load_state_dict(velocities)

    logger.info("checkpoint %s loaded", path)
    return metadata
