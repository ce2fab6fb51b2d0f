"""Report figures rendered to files next to the CSV tables.

Everything draws through the Agg backend so the harness works headless. Each
function writes one PNG and returns the path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def accuracy_bars(rows, path, title="Robust accuracy by attack"):
    """Grouped bars: one cluster per ensemble, one bar per attack.

    ``rows`` are (ensemble, attack, mean, std) tuples; failed cells (mean is
    None) render as hatched zero-height bars.
    """
    ensembles = sorted({r[0] for r in rows})
    attacks = sorted({r[1] for r in rows})
    lookup = {(r[0], r[1]): (r[2], r[3]) for r in rows}
    width = 0.8 / max(len(attacks), 1)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(ensembles)), 3.6))
    xs = np.arange(len(ensembles))
    for j, attack in enumerate(attacks):
        means, errs, hatches = [], [], []
        for ens in ensembles:
            mean, std = lookup.get((ens, attack), (None, None))
            means.append(0.0 if mean is None else mean)
            errs.append(0.0 if std is None else std)
            hatches.append("//" if mean is None else None)
        bars = ax.bar(xs + j * width, means, width, yerr=errs, capsize=2, label=attack)
        for bar, hatch in zip(bars, hatches):
            if hatch:
                bar.set_hatch(hatch)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(ensembles, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def diversity_heatmap(values, names, path, title="Perturbation cosine"):
    """Symmetric cosine matrix as a heatmap; missing entries show as blanks."""
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * len(names), 0.9 + 0.6 * len(names)))
    masked = np.ma.masked_invalid(values)
    im = ax.imshow(masked, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(len(names)))
    ax.set_yticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_yticklabels(names, fontsize=7)
    for i in range(len(names)):
        for j in range(len(names)):
            if not np.isnan(values[i, j]):
                ax.text(j, i, f"{values[i, j]:.2f}", ha="center", va="center", fontsize=6)
    ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def selection_scores(subset_labels, scores, ranks, path,
                     title="Candidate subset scores (rank order)"):
    """Pool scores of every candidate subset, best rank first."""
    order = np.argsort(ranks, kind="stable")
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(scores)), 3.2))
    ax.bar(range(len(order)), [scores[i] for i in order], color="steelblue")
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels([subset_labels[i] for i in order], rotation=60,
                       ha="right", fontsize=7)
    ax.set_ylabel("pool score")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
