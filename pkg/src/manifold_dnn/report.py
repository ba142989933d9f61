"""Figure rendering for the experiment reports.

Each function saves one PNG next to the delimited output. Only the CLI
report path imports this module, so the core library stays free of any
plotting dependency at import time.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_metrics_figure(reports: dict, path: str | Path) -> Path:
    """Per-split metric values per family, with the mean +- SD band."""
    path = Path(path)
    fams = list(reports)
    fig, ax = plt.subplots(figsize=(1.6 + 1.3 * len(fams), 3.6))
    for i, fam in enumerate(fams):
        rep = reports[fam]
        xs = np.full(len(rep.per_split), i, dtype=float)
        xs += np.linspace(-0.15, 0.15, len(rep.per_split))
        ax.plot(xs, rep.per_split, "o", ms=4, alpha=0.6)
        ax.errorbar([i], [rep.mean], yerr=[rep.sd], fmt="_", ms=18,
                    capsize=5, color="k", zorder=3)
    ax.set_xticks(range(len(fams)))
    ax.set_xticklabels(fams)
    metric = next(iter(reports.values())).metric
    ax.set_ylabel(metric)
    ax.set_title(f"{metric} per split (mean ± sd)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_history_figure(histories: dict, path: str | Path) -> Path:
    """Training and validation loss curves from the first split."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    plotted = False
    for fam, hist in histories.items():
        if hist is None or not hist.train_loss:
            continue
        epochs = np.arange(len(hist.train_loss))
        (line,) = ax.plot(epochs, hist.train_loss, label=f"{fam} train")
        if hist.val_loss:
            ax.plot(epochs, hist.val_loss, "--", color=line.get_color(),
                    label=f"{fam} val")
        plotted = True
    if plotted:
        ax.set_yscale("log")
        ax.legend(fontsize=8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training curves (split 0)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_rate_figure(rate, path: str | Path) -> Path:
    """Held-out risk against sample size on log-log axes with the fitted
    power law."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    n = np.asarray(rate.n_grid, dtype=float)
    risks = np.asarray(rate.mean_risks)
    ax.errorbar(n, risks, yerr=rate.sd_risks, fmt="o", capsize=4,
                label="mean held-out risk")
    if rate.slope is not None:
        anchor = np.log(risks[0]) - rate.slope * np.log(n[0])
        fit = np.exp(anchor + rate.slope * np.log(n))
        ax.plot(n, fit, "--", label=f"slope {rate.slope:.2f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("training samples n")
    ax.set_ylabel("risk")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
