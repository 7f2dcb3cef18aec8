from typing import List, Optional

import matplotlib.pyplot as plt
import networkx as nx
import numpy as np

from .utils import draw_curved_edge_labels, finish, project_viewpoints

CURVE_RAD = 0.2


def plot_view_graph(G: nx.DiGraph, path=None, title: Optional[str] = None):
    """
    Plots a view-graph with its learned edge weights.

    Nodes are drawn at an oblique projection of their viewpoint (node attribute
    ``pos``). Edges of bidirectional pairs are curved so that both weights stay
    readable; self-loops carry the weight a node gives to itself.

    Parameters
    ----------
    G : nx.DiGraph
        Graph from `ViewGraph.to_networkx`, edges carrying ``weight``.
    path : str or Path, optional
        Saves the figure there; shows it when omitted.
    title : str, optional
        Figure title.
    """
    coords = np.array([G.nodes[n]["pos"] for n in sorted(G.nodes())])
    pos = project_viewpoints(coords)
    fig, ax = plt.subplots(figsize=(8, 6))

    nx.draw_networkx_nodes(G, pos, ax=ax, node_color="tab:blue")
    nx.draw_networkx_labels(G, pos, ax=ax, labels={n: f"V{n}" for n in G.nodes()}, font_color="white")

    loops = list(nx.selfloop_edges(G))
    edges = [edge for edge in G.edges() if edge not in loops]
    curved = [edge for edge in edges if G.has_edge(edge[1], edge[0])]
    straight = [edge for edge in edges if edge not in curved]
    weights = nx.get_edge_attributes(G, "weight")

    nx.draw_networkx_edges(G, pos, ax=ax, edgelist=straight)
    nx.draw_networkx_edges(G, pos, ax=ax, edgelist=curved, connectionstyle=f"arc3, rad = {CURVE_RAD}")
    nx.draw_networkx_edges(G, pos, ax=ax, edgelist=loops)

    nx.draw_networkx_edge_labels(
        G, pos, ax=ax, edge_labels={edge: weights[edge] for edge in straight + loops}, font_size=8
    )
    draw_curved_edge_labels(ax, pos, {edge: weights[edge] for edge in curved}, rad=CURVE_RAD)

    ax.set_axis_off()
    if title:
        ax.set_title(title)
    finish(fig, path)


def plot_confusion_matrix(confusion: np.ndarray, class_names: List[str], path=None):
    """Heat map of confusion counts, rows true classes and columns predictions."""
    confusion = np.asarray(confusion)
    size = max(4.0, 0.35 * len(confusion))
    fig, ax = plt.subplots(figsize=(size + 1, size))

    image = ax.imshow(confusion, cmap="Blues")
    fig.colorbar(image, ax=ax)
    ticks = np.arange(len(confusion))
    ax.set_xticks(ticks)
    ax.set_yticks(ticks)
    ax.set_xticklabels(class_names, rotation=90, fontsize=7)
    ax.set_yticklabels(class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")

    if len(confusion) <= 12:
        threshold = confusion.max() / 2 if confusion.size else 0
        for i, j in np.ndindex(confusion.shape):
            color = "white" if confusion[i, j] > threshold else "black"
            ax.text(j, i, int(confusion[i, j]), ha="center", va="center", color=color, fontsize=8)

    finish(fig, path)
