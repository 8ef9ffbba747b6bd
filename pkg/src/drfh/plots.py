"""Figures rendered next to the CSV/JSON outputs (needs the ``plot`` extra)."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .sim import MetricsSeries, completion_cdf

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
# fixed metadata keeps repeated renders byte-identical
PNG_METADATA = {"Software": None}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "axes.spines.top": False,
        "axes.spines.right": False,
    })
    return plt


def new_figure(width=6.0, nrows=1, ncols=1, height=None):
    plt = _pyplot()
    fig, ax = plt.subplots(nrows, ncols, figsize=(width, height or width * GOLDEN * nrows / ncols))
    return fig, ax


def save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    _pyplot().close(fig)


def plot_shares(series: MetricsSeries, path) -> None:
    """Utilization and per-user global dominant share over time."""
    fig, (top, bottom) = new_figure(6.0, nrows=2, height=5.0)
    for r, name in enumerate(series.resource_names):
        top.step(series.times, series.utilization[:, r], where="post", label=name)
    top.set_ylabel("utilization")
    top.set_ylim(0, 1)
    top.legend(loc="upper right", frameon=False)
    for i, uid in enumerate(series.user_ids[:20]):
        bottom.step(series.times, series.shares[:, i], where="post", label=f"user {uid}")
    bottom.set_xlabel("time (s)")
    bottom.set_ylabel("global dominant share")
    if series.user_ids:
        bottom.legend(loc="upper right", frameon=False, ncol=2)
    save(fig, path)


def plot_utilization(runs: Sequence[MetricsSeries], path) -> None:
    fig, axes = new_figure(6.0, nrows=len(runs[0].resource_names), height=4.5)
    axes = np.atleast_1d(axes)
    for r, ax in enumerate(axes):
        for s in runs:
            ax.step(s.times, s.utilization[:, r], where="post", label=s.policy, lw=0.8)
        ax.set_ylabel(f"{runs[0].resource_names[r]} utilization")
        ax.set_ylim(0, 1)
    axes[0].legend(loc="lower right", frameon=False)
    axes[-1].set_xlabel("time (s)")
    save(fig, path)


def plot_completion_cdf(runs: Sequence[MetricsSeries], path) -> None:
    fig, ax = new_figure(4.0)
    for s in runs:
        x, y = completion_cdf(s)
        if x.size:
            ax.step(x, y, where="post", label=s.policy)
    ax.set_xlabel("job completion time (s)")
    ax.set_ylabel("CDF")
    ax.legend(loc="lower right", frameon=False)
    save(fig, path)


def plot_completion_ratios(report: dict, path) -> None:
    """Dedicated-cloud versus shared-cloud completion ratio, one dot per user."""
    fig, ax = new_figure(4.0, height=4.0)
    dc = [r["dedicated"] for r in report["per_user"].values()]
    sc = [r["shared"] for r in report["per_user"].values()]
    ax.plot([0, 1], [0, 1], color="0.6", lw=0.8)
    ax.scatter(dc, sc, s=14)
    ax.set_xlabel("completion ratio, dedicated cloud")
    ax.set_ylabel("completion ratio, shared cloud")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    save(fig, path)
