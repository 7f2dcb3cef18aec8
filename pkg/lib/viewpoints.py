from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, ShapeError

LAYOUTS = ("cube8", "circular12")


def cube_viewpoints() -> np.ndarray:
    """
    The eight vertices of the cube ``(+-1, +-1, +-1)``.

    Vertex ``4 * b_x + 2 * b_y + b_z`` has coordinate ``2 * b - 1`` on each axis, so
    index 0 is ``(-1, -1, -1)`` and index 7 is ``(1, 1, 1)``. This order is also the
    lexicographic order of the coordinates.

    Returns
    -------
    np.ndarray
        Array of shape (8, 3).
    """
    bits = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], dtype=np.float64)
    return 2.0 * bits - 1.0


def circular_viewpoints(count: int = 12, elevation_deg: float = 30.0) -> np.ndarray:
    """
    A unit-radius ring of viewpoints at a fixed elevation.

    Point k sits at azimuth ``k * 360 / count`` degrees with ``z = sin(elevation)``
    and horizontal radius ``cos(elevation)``.

    Parameters
    ----------
    count : int, optional
        Number of viewpoints, at least 3. Defaults to 12.
    elevation_deg : float, optional
        Elevation above the horizontal plane. Defaults to 30.

    Returns
    -------
    np.ndarray
        Array of shape (count, 3).
    """
    if count < 3:
        raise ConfigurationError(f"a circular layout needs at least 3 viewpoints, got {count}")

    azimuth = np.deg2rad(np.arange(count) * 360.0 / count)
    elevation = np.deg2rad(elevation_deg)
    radius = np.cos(elevation)
    return np.stack(
        [radius * np.cos(azimuth), radius * np.sin(azimuth), np.full(count, np.sin(elevation))],
        axis=1,
    )


def layout_viewpoints(name: str, normalize: bool = False) -> np.ndarray:
    """Viewpoints for a named layout (``cube8`` or ``circular12``)."""
    if name == "cube8":
        coords = cube_viewpoints()
    elif name == "circular12":
        coords = circular_viewpoints(12, 30.0)
    else:
        raise ConfigurationError(f"unknown viewpoint layout '{name}', expected one of {LAYOUTS}")
    return normalize_viewpoints(coords) if normalize else coords


def normalize_viewpoints(coords: np.ndarray) -> np.ndarray:
    """Projects every viewpoint onto the unit sphere."""
    coords = np.asarray(coords, dtype=np.float64)
    return coords / np.linalg.norm(coords, axis=1, keepdims=True)


def validate_viewpoints(coords: np.ndarray) -> np.ndarray:
    """Checks that viewpoints form a finite (N, 3) array without duplicates."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"viewpoints must have shape (N, 3), got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ConfigurationError("viewpoints must be finite")
    if len(np.unique(coords, axis=0)) != len(coords):
        raise ConfigurationError("viewpoints within a layout must be distinct")
    return coords


def canonical_order(coords: np.ndarray) -> np.ndarray:
    """Permutation sorting viewpoints lexicographically by (x, y, z)."""
    coords = np.asarray(coords)
    return np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))


def write_viewpoints_csv(path: Path, coords: np.ndarray):
    """Writes ``index,x,y,z`` rows with round-trippable floats."""
    coords = validate_viewpoints(coords)
    lines = ["index,x,y,z"]
    lines += [f"{i},{x!r},{y!r},{z!r}" for i, (x, y, z) in enumerate(coords.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_viewpoints_csv(path: Path) -> np.ndarray:
    """Reads a file written by `write_viewpoints_csv`; indices must be 0..N-1 in order."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0].strip() != "index,x,y,z":
        raise FormatError(f"{path} is not a viewpoint CSV (missing 'index,x,y,z' header)")

    rows = [line.split(",") for line in lines[1:]]
    if [int(row[0]) for row in rows] != list(range(len(rows))):
        raise FormatError(f"{path} does not list viewpoint indices 0..{len(rows) - 1} in order")
    return validate_viewpoints(np.array([[float(v) for v in row[1:]] for row in rows]))
