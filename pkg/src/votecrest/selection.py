"""Model-subset selection via a cyclic adversarial pool, plus rank validation.

Building an adversarial point for every candidate subset is intractable, so
each pool point is attacked against a single base model (point j against
model j mod n). A candidate k-subset then scores one point for every pool
point that at least ceil(k/2) of its members classify correctly; the
highest-scoring subset is selected.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from . import netcore
from .errors import ConfigurationError, InputError

Array = np.ndarray


@dataclass(frozen=True)
class AdvPool:
    """Adversarial points generated round-robin against the base models."""

    x_adv: Array          # (r, d)
    y: Array              # (r,)
    source_model: Array   # (r,) ints; entry j equals j mod n
    n_models: int
    descriptor: str = ""

    def __post_init__(self):
        r = self.x_adv.shape[0]
        if self.y.shape[0] != r or self.source_model.shape[0] != r:
            raise ConfigurationError("pool fields disagree in length")
        expected = np.arange(r) % self.n_models
        if not np.array_equal(self.source_model, expected):
            raise ConfigurationError("pool source indices must be j mod n")

    @property
    def size(self) -> int:
        return self.x_adv.shape[0]


@dataclass(frozen=True)
class ScoreTable:
    """Scores and competition ranks for every candidate subset (rank 1 = best)."""

    subsets: tuple[tuple[int, ...], ...]
    scores: Array        # ints in [0, pool_size]
    ranks: Array
    pool_size: int

    def rows(self):
        for subset, score, rank in zip(self.subsets, self.scores, self.ranks):
            yield "-".join(str(i) for i in subset), int(score), int(rank)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subset", "score", "rank"])
            for row in self.rows():
                writer.writerow(row)


def _competition_ranks(scores: Array) -> Array:
    # rank = 1 + number of strictly better scores; ties share the best rank
    return 1 + (scores[None, :] > scores[:, None]).sum(axis=1)


def build_adv_pool(models, points, attack, descriptor: str = "") -> AdvPool:
    """Attack point j against model (j mod n); r attacks total.

    ``points`` is an iterable of (x, y) pairs; ``attack`` maps
    (model, x, y) to an AttackResult.
    """
    models = list(models)
    pairs = list(points)
    n = len(models)
    if n == 0 or not pairs:
        raise InputError("need at least one model and one point")
    if len(pairs) < n:
        warnings.warn(f"pool of {len(pairs)} points over {n} models: "
                      "some models generate no perturbations")
    xs, ys, src = [], [], []
    for j, (x, y) in enumerate(pairs):
        result = attack(models[j % n], x, y)
        xs.append(result.x_adv)
        ys.append(int(y))
        src.append(j % n)
    return AdvPool(np.array(xs), np.array(ys), np.array(src), n, descriptor)


def score_ensembles(models, pool: AdvPool, k: int) -> ScoreTable:
    """Score every k-subset: pool points correct for >= ceil(k/2) members."""
    models = list(models)
    n = len(models)
    if k < 1 or k > n:
        raise ConfigurationError(f"k={k} outside [1, {n}]")
    correct = np.zeros((n, pool.size), dtype=bool)
    for i, model in enumerate(models):
        for j in range(pool.size):
            correct[i, j] = netcore.predict_label(model, pool.x_adv[j]) == pool.y[j]
    need = math.ceil(k / 2)
    subsets = tuple(combinations(range(n), k))
    scores = np.array([
        int((correct[list(subset)].sum(axis=0) >= need).sum()) for subset in subsets
    ])
    return ScoreTable(subsets, scores, _competition_ranks(scores), pool.size)


def choose_ensemble(models, points, attack, k: int, *,
                    max_candidates: int = 10_000, descriptor: str = ""):
    """Build the pool, score all k-subsets, and pick the best.

    Returns (score_table, selected_subset); score ties resolve to the
    lexicographically smallest subset.
    """
    models = list(models)
    if k >= 1 and math.comb(len(models), k) > max_candidates:
        raise ConfigurationError(
            f"{math.comb(len(models), k)} candidate subsets exceed the cap "
            f"of {max_candidates}")
    pool = build_adv_pool(models, points, attack, descriptor)
    table = score_ensembles(models, pool, k)
    best = int(np.argmax(table.scores))  # argmax takes the first = smallest subset
    return table, table.subsets[best]


def kendall_tau(scores_a, scores_b) -> float:
    """Tie-corrected rank correlation (tau-b) between two score lists."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise InputError("score lists must be 1-D and equally long")
    if a.shape[0] < 2:
        raise InputError("need at least two scores")
    return float(stats.kendalltau(a, b, variant="b").statistic)
