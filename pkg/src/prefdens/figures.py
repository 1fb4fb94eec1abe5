"""Figure rendering for experiment reports.

The experiment runners emit flat CSV rows; these helpers turn a report into
a matplotlib figure saved next to the CSV.  Only the CLI report path calls
in here, so the statistical modules stay free of plotting concerns.
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _cells(rows):
    """Group report rows into {metric: {n: [values across seeds]}}."""
    by_metric: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for condition, metric, value in rows:
        fields = dict(part.split("=", 1) for part in condition.split("|"))
        by_metric[metric][int(fields["n"])].append(float(value))
    return by_metric


def _median_curve(series):
    ns = sorted(series)
    return ns, [float(np.median(series[n])) for n in ns]


def recovery_figure(rows, title="Structure recovery"):
    data = _cells(rows)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ns = sorted(data["exact_match"])
    rates = [float(np.mean(data["exact_match"][n])) for n in ns]
    ax1.plot(ns, rates, "o-")
    ax1.set_xscale("log")
    ax1.set_ylim(-0.05, 1.05)
    ax1.set_xlabel("training records")
    ax1.set_ylabel("exact match rate")
    ns2, dist = _median_curve(data["edit_distance"])
    ax2.plot(ns2, dist, "s-", color="tab:red")
    ax2.set_xscale("log")
    ax2.set_xlabel("training records")
    ax2.set_ylabel("median edit distance")
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def projection_comparison_figure(rows, title="Least-squares vs smoothed projection"):
    data = _cells(rows)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for metric, style, label in (
        ("ls_error", "s--", "least squares"),
        ("map_error", "o-", "smoothed (MAP)"),
    ):
        ns, med = _median_curve(data[metric])
        ax.plot(ns, med, style, label=label)
    ax.set_xscale("log")
    ax.set_xlabel("training records")
    ax.set_ylabel("median weight error")
    ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    return fig


def learning_curve_figure(rows, title="Learning curves"):
    data = _cells(rows)
    panels = [
        ("mu_error", "mean distance"),
        ("sigma_error", "covariance distance"),
        ("noise_error", "noise variance error"),
        ("heldout_loglik_per_record", "held-out log likelihood / record"),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6.5))
    for ax, (metric, label) in zip(axes.ravel(), panels):
        if metric not in data:
            ax.set_visible(False)
            continue
        ns, med = _median_curve(data[metric])
        ax.plot(ns, med, "o-")
        ax.set_xscale("log")
        ax.set_xlabel("training records")
        ax.set_ylabel(label)
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> None:
    fig.savefig(path, dpi=150)
    plt.close(fig)
