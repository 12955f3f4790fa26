"""Figures written next to the CSV/JSON outputs of a run."""

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.cm import ScalarMappable
from matplotlib.colors import Normalize
from matplotlib.figure import Figure
from mpl_toolkits.mplot3d.art3d import Poly3DCollection

__all__ = ["save_figure", "plot_null_distribution", "plot_pvalues", "plot_face_pvalues"]

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def save_figure(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    return path


def plot_null_distribution(result, path, label="statistic"):
    """Histogram of the permutation null distribution with the observed value marked."""
    if result.null_distribution is None:
        raise ValueError("result carries no null distribution; run with keep_null=True")
    null = result.null_distribution[np.isfinite(result.null_distribution)]
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(4.5, 3))
        ax = fig.subplots()
        ax.hist(null, bins=50, color="0.7", edgecolor="0.4", linewidth=0.4)
        ax.axvline(result.statistic_value, color="C3", linewidth=1.5,
                   label=f"observed, p = {result.p_value:.3g}")
        ax.set_xlabel(label)
        ax.set_ylabel("permutations")
        ax.legend(frameon=False)
        return save_figure(fig, path)


def plot_pvalues(batch, path):
    """Sorted raw p-values against the Benjamini-Hochberg line ``alpha * i / M``."""
    raw = np.sort(batch.raw_p[np.isfinite(batch.raw_p)])
    m = len(raw)
    rank = np.arange(1, m + 1)
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(4.5, 3))
        ax = fig.subplots()
        ax.plot(rank, raw, ".", markersize=3, color="C0", label="raw p")
        ax.plot(rank, batch.alpha * rank / max(m, 1), color="C3", linewidth=1,
                label=f"BH line, alpha = {batch.alpha:g}")
        ax.set_xlabel("rank")
        ax.set_ylabel("p-value")
        ax.set_ylim(0, 1)
        ax.legend(frameon=False)
        ax.set_title(f"{int(batch.rejected.sum())} of {len(batch.rejected)} rejected")
        return save_figure(fig, path)


def plot_face_pvalues(mesh, adjusted_p, path, alpha=0.05):
    """Mesh rendering with significant faces colored by adjusted p in ``[0, alpha]``."""
    adjusted_p = np.asarray(adjusted_p, dtype=float)
    tri = mesh.vertices[mesh.faces]
    cmap = matplotlib.colormaps["viridis"]
    norm = Normalize(0.0, alpha)
    colors = np.tile(np.array([0.85, 0.85, 0.85, 1.0]), (mesh.n_faces, 1))
    sig = np.isfinite(adjusted_p) & (adjusted_p < alpha)
    colors[sig] = cmap(norm(adjusted_p[sig]))
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(5, 4))
        ax = fig.add_subplot(projection="3d")
        ax.add_collection3d(Poly3DCollection(tri, facecolors=colors, edgecolors="0.5", linewidths=0.1))
        lo, hi = mesh.vertices.min(0), mesh.vertices.max(0)
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_zlim(lo[2], hi[2])
        ax.set_box_aspect(hi - lo)
        ax.set_axis_off()
        sm = ScalarMappable(norm=norm, cmap=cmap)
        fig.colorbar(sm, ax=ax, shrink=0.6, label="adjusted p")
        return save_figure(fig, path)
