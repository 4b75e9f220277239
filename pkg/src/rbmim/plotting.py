"""PNG figures rendered from the same tables the CLI writes as CSV."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_PNG_META = {"Software": None}  # keeps the files free of version strings


def plot_metric_series(path, series: dict, drift_batches=(), metric: str = "pmAUC"):
    """One line per detector: the seed-averaged ``metric`` over batches.

    ``series`` maps detector name to a list of (batch, value) pairs.
    """
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for name in sorted(series):
        pts = series[name]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=name, lw=1.2)
    for t in drift_batches:
        ax.axvline(t, color="grey", ls=":", lw=1)
    ax.set_xlabel("batch")
    ax.set_ylabel(metric)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_sweep(path, rows, parameter: str, metric: str = "pmAUC"):
    """Metric against the swept parameter, one line per detector."""
    by_det = defaultdict(list)
    for r in rows:
        by_det[r["detector"]].append((r["value"], r[metric]))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in sorted(by_det):
        pts = sorted(by_det[name])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel(parameter)
    ax.set_ylabel(metric)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
