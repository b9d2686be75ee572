"""Median-and-IQR success curves rendered to SVG.

Output is byte-stable across runs: the SVG hash salt is fixed and the date
metadata dropped. Every median line carries ``gid="median-<label>"`` and every
IQR band ``gid="iqr-<label>"`` so tests and tools can find the series.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {
    "her-sparse": "#1f77b4",
    "her-dense": "#ff7f0e",
    "ddpg-sparse": "#2ca02c",
    "ddpg-dense": "#d62728",
}

STYLE = {
    "svg.hashsalt": "goalforge",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def plot_curves(summaries: Mapping, path, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for label, s in summaries.items():
            color = COLORS.get(label)
            epochs = range(1, len(s.median) + 1)
            band = ax.fill_between(epochs, s.q1, s.q3, alpha=0.25, color=color, linewidth=0)
            band.set_gid(f"iqr-{label}")
            (line,) = ax.plot(epochs, s.median, color=color, label=label, linewidth=1.5)
            line.set_gid(f"median-{label}")
        ax.set_xlabel("epoch")
        ax.set_ylabel("median test success rate")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="lower right", fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
