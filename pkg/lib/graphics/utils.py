from typing import Dict, Tuple

import matplotlib.pyplot as plt
import numpy as np

Point = Tuple[float, float]

# oblique projection of (x, y, z) onto the drawing plane
PROJECTION = np.array([[1.0, 0.0], [0.0, 1.0], [0.4, 0.25]])


def project_viewpoints(coords: np.ndarray) -> Dict[int, Point]:
    """2-D drawing positions of 3-D viewpoints, keyed by node index."""
    flat = np.asarray(coords, dtype=np.float64) @ PROJECTION
    return {i: (float(x), float(y)) for i, (x, y) in enumerate(flat)}


def curved_midpoint(ax, start: Point, end: Point, rad: float) -> Point:
    """
    Midpoint of the quadratic Bezier arc matplotlib draws for ``arc3,rad=rad``.

    The control point is computed in display coordinates, like the arc itself, and
    the midpoint is mapped back to data coordinates.
    """
    p1 = ax.transData.transform(np.asarray(start))
    p2 = ax.transData.transform(np.asarray(end))
    control = 0.5 * (p1 + p2) + rad * np.array([[0, 1], [-1, 0]]) @ (p2 - p1)
    middle = 0.25 * p1 + 0.5 * control + 0.25 * p2
    x, y = ax.transData.inverted().transform(middle)
    return float(x), float(y)


def draw_curved_edge_labels(
    ax,
    pos: Dict[int, Point],
    edge_labels: Dict[Tuple[int, int], str],
    rad: float = 0.2,
    font_size: int = 8,
):
    """
    Writes edge labels at the middle of curved edges.

    networkx places labels on the straight segment between the nodes, which puts
    the two labels of a bidirectional pair on top of each other.
    """
    items = {}
    for (u, v), label in edge_labels.items():
        x, y = curved_midpoint(ax, pos[u], pos[v], rad)
        items[(u, v)] = ax.text(
            x,
            y,
            str(label),
            size=font_size,
            horizontalalignment="center",
            verticalalignment="center",
            bbox=dict(boxstyle="round", ec="white", fc="white"),
            zorder=1,
        )
    return items


def finish(fig, path=None):
    """Saves the figure to ``path`` and closes it, or shows it."""
    if path is None:
        plt.show()
        return
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
