"""Decision-boundary diversity via cosines between adversarial perturbations.

Each model is attacked once per data point; for a pair of models the entry is
the mean cosine between their perturbations of the same point. Models that
agree on how to break a point (similar boundaries) give cosines near 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

Array = np.ndarray


def perturbation_cosine(delta_a: Array, delta_b: Array) -> float:
    """Cosine of the angle between two nonzero perturbations."""
    delta_a = np.asarray(delta_a, dtype=np.float64)
    delta_b = np.asarray(delta_b, dtype=np.float64)
    na = np.linalg.norm(delta_a)
    nb = np.linalg.norm(delta_b)
    if na == 0.0 or nb == 0.0:
        raise InputError("zero perturbation has no direction; skip the point")
    return float(delta_a @ delta_b / (na * nb))


@dataclass(frozen=True)
class CosineMatrix:
    """Pairwise mean cosines; NaN marks pairs with every point skipped."""

    values: Array    # (n, n), symmetric
    skipped: Array   # (n, n) ints: points excluded for that pair
    n_points: int


def pairwise_cosine_matrix(models, attack, dataset) -> CosineMatrix:
    """Mean perturbation cosine for every model pair over the dataset.

    Perturbations are computed once per (model, point) and reused for both
    orientations of a pair, so the matrix is exactly symmetric. Points where
    either model's attack returned a zero perturbation (e.g. an early exit on
    an already-misclassified point) are excluded from that pair's mean and
    counted in ``skipped``.
    """
    models = list(models)
    pairs = list(dataset)
    n = len(models)
    if n == 0 or not pairs:
        raise InputError("need at least one model and one point")
    deltas = np.zeros((n, len(pairs), len(np.asarray(pairs[0][0]))))
    for m, model in enumerate(models):
        for j, (x, y) in enumerate(pairs):
            deltas[m, j] = attack(model, x, y).x_adv - x
    norms = np.linalg.norm(deltas, axis=2)
    values = np.full((n, n), np.nan)
    skipped = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(a, n):
            usable = (norms[a] > 0) & (norms[b] > 0)
            skipped[a, b] = skipped[b, a] = int((~usable).sum())
            if usable.any():
                cos = (deltas[a, usable] * deltas[b, usable]).sum(axis=1)
                cos /= norms[a, usable] * norms[b, usable]
                values[a, b] = values[b, a] = float(cos.mean())
    return CosineMatrix(values, skipped, len(pairs))


def group_means(matrix: CosineMatrix, labels) -> tuple[float, float]:
    """Mean cosine over same-label pairs (a != b) vs different-label pairs.

    ``labels`` assigns a group (e.g. the training objective) to each model;
    pairing the two seeds of one objective forms the same-group entries.
    NaN entries are excluded.
    """
    labels = list(labels)
    n = matrix.values.shape[0]
    if len(labels) != n:
        raise InputError("one label per model required")
    same, cross = [], []
    for a in range(n):
        for b in range(a + 1, n):
            v = matrix.values[a, b]
            if np.isnan(v):
                continue
            (same if labels[a] == labels[b] else cross).append(v)
    if not same or not cross:
        raise InputError("need at least one same-group and one cross-group pair")
    return float(np.mean(same)), float(np.mean(cross))


def write_cosine_csv(matrix: CosineMatrix, names, path) -> None:
    """Matrix CSV with model identifiers as headers and a skipped_points column."""
    names = list(names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model"] + names + ["skipped_points"])
        for i, name in enumerate(names):
            row = [name]
            for j in range(len(names)):
                v = matrix.values[i, j]
                row.append("missing" if np.isnan(v) else repr(float(v)))
            row.append(int(matrix.skipped[i].sum()))
            writer.writerow(row)
