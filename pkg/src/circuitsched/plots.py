"""Figure rendering for the report paths.

Every CLI report writes its delimited data first; these helpers render the
same series as PNG files next to them.  The Agg backend keeps rendering
headless and deterministic.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLE = {
    "rr": {"color": "#888888", "marker": "o"},
    "ewma": {"color": "#d62728", "marker": "s"},
    "arpf": {"color": "#1f77b4", "marker": "^"},
    "optpf": {"color": "#2ca02c", "marker": "d"},
}


def _style(name: str) -> dict:
    return _STYLE.get(name, {"color": "black", "marker": "."})


def plot_series(
    series: Dict[str, Tuple[Sequence[float], Sequence[float]]],
    xlabel: str,
    ylabel: str,
    path: str,
    title: str = "",
) -> None:
    """One line per labelled (x, y) series."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, (xs, ys) in series.items():
        st = _style(label)
        ax.plot(xs, ys, label=label, color=st["color"], marker=st["marker"],
                markersize=4, linewidth=1.2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_latency_cdf(
    cdfs: Dict[str, List[Tuple[float, float]]], path: str, title: str = ""
) -> None:
    """Step CDF per scheduler; a curve ending below 1.0 shows censoring."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, steps in cdfs.items():
        st = _style(label)
        if steps:
            xs = [x for x, _ in steps]
            ys = [y for _, y in steps]
            ax.step([0.0] + xs, [0.0] + ys, where="post", label=label,
                    color=st["color"], linewidth=1.4)
        else:
            ax.plot([], [], label=f"{label} (none completed)",
                    color=st["color"])
    ax.set_xlabel("flush latency (ms)")
    ax.set_ylabel("fraction of circuits flushed")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
