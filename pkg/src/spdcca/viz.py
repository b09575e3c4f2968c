"""Matplotlib figure rendering for the report paths (headless, deterministic)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_cv_table(table_rows, path):
    """Cross-validation error curves, one line per candidate rank."""
    rows = sorted(table_rows)
    ds = sorted({r[0] for r in rows})
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for d in ds:
        lams = [r[1] for r in rows if r[0] == d]
        errs = [r[2] for r in rows if r[0] == d]
        sds = [r[3] for r in rows if r[0] == d]
        order = np.argsort(lams)
        lams = np.asarray(lams)[order]
        errs = np.asarray(errs)[order]
        sds = np.asarray(sds)[order]
        ax.plot(lams, errs, marker=".", label=f"d={d}")
        ax.fill_between(lams, errs - sds, errs + sds, alpha=0.15)
    ax.set_xscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel("held-out error")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cv_correlations(cv_correlations, path):
    """Scree plot of the held-out canonical correlations per rank."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ds = sorted(cv_correlations)
    max_k = max(len(cv_correlations[d]) for d in ds)
    for k in range(max_k):
        vals = [cv_correlations[d][k] if k < len(cv_correlations[d]) else np.nan
                for d in ds]
        ax.plot(ds, vals, marker="o", label=f"pair {k + 1}")
    ax.set_xlabel("rank d")
    ax.set_ylabel("held-out |correlation|")
    ax.set_xticks(ds)
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_mode(grid_points, mean_values, plus_values, minus_values, path):
    """Entrywise trajectories of the mean curve and both mode extremes."""
    m = mean_values.shape[-1]
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    ncols = min(3, len(pairs))
    nrows = int(np.ceil(len(pairs) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows),
                             squeeze=False, sharex=True)
    for ax, (i, j) in zip(axes.ravel(), pairs):
        ax.plot(grid_points, mean_values[:, i, j], color="gray", label="mean")
        ax.plot(grid_points, plus_values[:, i, j], color="tab:red", label="mode +")
        ax.plot(grid_points, minus_values[:, i, j], color="tab:blue", label="mode -")
        ax.set_title(f"entry ({i + 1},{j + 1})", fontsize=9)
    for ax in axes.ravel()[len(pairs):]:
        ax.set_visible(False)
    axes[0, 0].legend(loc="best", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metrics(metrics, path):
    """Bar chart of the named evaluation metrics."""
    names = list(metrics)
    values = [metrics[n] for n in names]
    fig, ax = plt.subplots(figsize=(4.5, 3.0))
    ax.bar(names, values, color="tab:blue")
    ax.set_ylabel("value")
    for idx, v in enumerate(values):
        ax.text(idx, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
