"""Matplotlib figures written next to the CSV/JSON outputs."""
from __future__ import annotations

from typing import Mapping, Optional, Sequence

from matplotlib.figure import Figure

from featurenms.evaluation import PrCurve

# one colour per report variant, in the order they are usually passed
_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:brown", "tab:orange", "black")


def plot_pr_curves(curves: Mapping[str, PrCurve], path, title: Optional[str] = None) -> None:
    fig = Figure(figsize=(7.0, 5.0))
    ax = fig.add_subplot(1, 1, 1)
    for k, (label, curve) in enumerate(curves.items()):
        recall = [0.0] + [p.recall for p in curve.points]
        precision = [curve.points[0].precision if curve.points else 0.0] + [p.precision for p in curve.points]
        ax.plot(recall, precision, color=_COLORS[k % len(_COLORS)], lw=2.0 if k == 0 else 1.2, label=label)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.02)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_metric_bars(names: Sequence[str], values: Sequence[float], ylabel: str, path) -> None:
    fig = Figure(figsize=(7.0, 3.5))
    ax = fig.add_subplot(1, 1, 1)
    ax.bar(range(len(values)), values, color=[_COLORS[k % len(_COLORS)] for k in range(len(values))])
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
