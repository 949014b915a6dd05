"""Matplotlib figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from numpy.typing import NDArray  # noqa: E402

from .varifold import DiracVarifold  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _draw_atoms(ax, positions: NDArray, frames: NDArray | None, weights: NDArray, cmap: str, label: str,
                vmin: float | None = None, vmax: float | None = None):
    if frames is not None and frames.shape[1] == 1:
        # segments centred on the atom, coloured by weight per unit length
        half = 0.5 * frames[:, 0, :2]
        length = np.linalg.norm(frames[:, 0], axis=1)
        dens = np.divide(weights, length, out=np.zeros_like(weights), where=length > 0)
        segs = np.stack([positions[:, :2] - half, positions[:, :2] + half], axis=1)
        from matplotlib.collections import LineCollection

        lc = LineCollection(segs, cmap=cmap, linewidths=2.5, label=label)
        lc.set_array(dens)
        if vmin is not None:
            lc.set_clim(vmin, vmax)
        ax.add_collection(lc)
        return lc
    return ax.scatter(positions[:, 0], positions[:, 1], c=weights, cmap=cmap, s=30, label=label,
                      vmin=vmin, vmax=vmax)


def plot_registration(path: str | Path, source: DiracVarifold, target: DiracVarifold,
                      final_positions: NDArray, final_frames: NDArray | None, final_weights: NDArray,
                      title: str = "") -> Path:
    """Source (grey), target (black outline) and deformed source coloured by weight density."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(source.positions[:, 0], source.positions[:, 1], s=8, color="0.7", label="source")
    ax.scatter(target.positions[:, 0], target.positions[:, 1], s=14, facecolors="none", edgecolors="k",
               label="target")
    art = _draw_atoms(ax, final_positions, final_frames, final_weights, "viridis", "deformed")
    fig.colorbar(art, ax=ax, shrink=0.8, label="weight density" if final_frames is not None else "weight")
    ax.set_aspect("equal")
    ax.autoscale()
    ax.legend(loc="best", fontsize=8)
    ax.set_title(title)
    return _save(fig, path)


def plot_weight_paths(path: str | Path, times: NDArray, weights: NDArray, max_atoms: int = 64) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for i in range(min(weights.shape[1], max_atoms)):
        ax.plot(times, weights[:, i], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("weight")
    ax.set_title("weight evolution")
    return _save(fig, path)


def plot_histogram(path: str | Path, counts: NDArray, edges: NDArray, title: str = "final weights") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.stairs(counts, edges, fill=True, alpha=0.7)
    ax.set_xlabel("value")
    ax.set_ylabel("atoms")
    ax.set_title(title)
    return _save(fig, path)


def plot_gamma_sweep(path: str | Path, gammas: Sequence[float], deformation: Sequence[float],
                     weight: Sequence[float]) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(gammas, deformation, "o-", label="deformation")
    ax.semilogx(gammas, weight, "s-", label="weight")
    ax.set_xlabel("gamma")
    ax.set_ylabel("energy")
    ax.legend()
    return _save(fig, path)


def plot_geodesic(path: str | Path, times: NDArray, positions: NDArray, weights: NDArray) -> Path:
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(8, 3.5))
    a0.plot(positions[:, 0], positions[:, 1], "o-", ms=3)
    a0.set_aspect("equal")
    a0.set_title("position")
    a1.plot(times, weights)
    a1.set_xlabel("t")
    a1.set_title("weight")
    return _save(fig, path)
