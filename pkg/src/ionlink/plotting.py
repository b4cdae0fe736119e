"""Static figures rendered next to the CSV tables (headless Agg backend)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_tof(dists, path):
    """Arrival-time densities, one panel per species, time in microseconds."""
    by_species = defaultdict(list)
    for key, dist in dists:
        by_species[key[0]].append((key, dist))
    fig, axes = plt.subplots(len(by_species), 1, figsize=(7, 2.6 * len(by_species)), squeeze=False)
    for ax, (name, items) in zip(axes[:, 0], by_species.items()):
        for (_, V2, L), dist in items:
            ax.plot(dist.tau_grid * 1e6, dist.density * 1e-6, lw=1, label=f"V2={V2:g} V, L={L:g} m")
        ax.set_title(name)
        ax.set_xlabel("arrival time [us]")
        ax.set_ylabel("density [1/us]")
        ax.legend(fontsize=6)
    return _save(fig, path)


def plot_rate_sweep(rows, path):
    """Rate against V2, against L, and for the zero-field source."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    panels = {"V2": (axes[0], 2, "|V2| [V]"), "L": (axes[1], 3, "L [m]"), "zero-field": (axes[2], 3, "L [m]")}
    series = defaultdict(list)
    for row in rows:
        series[(row[0], row[1])].append(row)
    for (sweep, species), pts in series.items():
        ax, col, label = panels[sweep]
        xs = [abs(r[col]) for r in pts]
        ax.plot(xs, [r[7] for r in pts], marker="o", ms=3, label=species)
        ax.set_xlabel(label)
        ax.set_ylabel("rate [bit/s]")
        ax.set_yscale("log")
        ax.set_title(sweep)
    axes[0].legend(fontsize=7)
    return _save(fig, path)


def plot_wien(rows, path):
    """Filtered rate and information rate against aperture size."""
    fig, axes = plt.subplots(1, 2, figsize=(11, 3.8))
    series = defaultdict(list)
    for row in rows:
        if row[-1] == "ok":
            series[(row[0], row[1])].append(row)
    for (species, mode), pts in series.items():
        if mode == "post-acceleration":
            axes[0].plot([r[2] for r in pts], [r[9] for r in pts], marker="o", ms=3, label=species)
        axes[1].plot([r[2] for r in pts], [r[11] for r in pts], marker="o", ms=3, label=f"{species} {mode}")
    for ax, ylabel in zip(axes, ("rate 1/T [bit/s]", "I/T [bit/s]")):
        ax.set_xscale("log")
        ax.set_xlabel("aperture [m]")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=6)
    axes[1].set_yscale("symlog", linthresh=1.0)
    return _save(fig, path)
