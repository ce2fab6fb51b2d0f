"""Synthetic desk-scale datasets with known separation margins.

"gaussian-blobs" places one truncated Gaussian blob per class inside the unit
box, with class supports (l-inf balls around the centers) pairwise separated
by at least ``margin`` in l-inf distance. That guarantee makes analytic
robustness bounds possible. "ring" draws concentric 2-D annuli with radial
gaps of ``margin``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .seeding import rng_from

Array = np.ndarray

DATASET_KINDS = ("gaussian-blobs", "ring")


@dataclass(frozen=True)
class Dataset:
    X: Array            # (N, d), inside [0, 1]^d
    y: Array            # (N,) ints in [0, C)
    n_classes: int
    margin: float
    kind: str
    centers: Array | None = None  # blob centers when applicable

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ConfigurationError("dataset arrays have inconsistent shapes")
        if (self.X < 0).any() or (self.X > 1).any():
            raise ConfigurationError("features must lie in the unit box")
        if self.y.min(initial=0) < 0 or self.y.max(initial=0) >= self.n_classes:
            raise ConfigurationError("labels out of range")

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self.X[i], int(self.y[i])

    def take(self, n: int) -> "Dataset":
        """First n points (class-interleaved order preserved)."""
        return Dataset(self.X[:n], self.y[:n], self.n_classes, self.margin,
                       self.kind, self.centers)


def _blob_centers(d: int, n_classes: int, margin: float, radius: float,
                  seed: int) -> Array:
    """Rejection-sample centers with pairwise l-inf distance >= 2*radius + margin."""
    sep = 2 * radius + margin
    lo, hi = radius, 1.0 - radius
    if hi <= lo:
        raise ConfigurationError("support radius too large for the unit box")
    rng = rng_from(seed, "geometry")
    for _ in range(20_000):
        centers = rng.uniform(lo, hi, size=(n_classes, d))
        ok = True
        for a in range(n_classes):
            for b in range(a + 1, n_classes):
                if np.abs(centers[a] - centers[b]).max() < sep:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return centers
    raise ConfigurationError(
        f"could not place {n_classes} class centers with separation {sep:.3f} "
        f"in {d}-D; reduce margin or support radius")


def gen_dataset(kind: str, d: int, n_classes: int, n_per_class: int,
                margin: float, seed: int, *, support_radius: float | None = None,
                split: int = 0) -> Dataset:
    """Deterministic synthetic dataset.

    ``split`` selects an independent draw of points over the same class
    geometry (0 = train, 1 = eval, ...), so train and test sets share centers.
    """
    if kind not in DATASET_KINDS:
        raise ConfigurationError(f"unknown dataset kind {kind!r}")
    if n_per_class < 1:
        raise ConfigurationError("n_per_class must be >= 1 (empty class)")
    if n_classes < 2:
        raise ConfigurationError("need at least two classes")
    if not 0 < margin < 1:
        raise ConfigurationError("margin must lie in (0, 1)")

    if kind == "gaussian-blobs":
        radius = support_radius if support_radius is not None else \
            min(margin / 2.0, (1.0 - margin) / (2 * n_classes + 2))
        if radius <= 0:
            raise ConfigurationError("support radius must be positive")
        centers = _blob_centers(d, n_classes, margin, radius, seed)
        rng = rng_from(seed, "points", split)
        xs, ys = [], []
        for c in range(n_classes):
            noise = rng.normal(0.0, radius / 3.0, size=(n_per_class, d))
            noise = np.clip(noise, -radius, radius)
            xs.append(np.clip(centers[c] + noise, 0.0, 1.0))
            ys.append(np.full(n_per_class, c, dtype=np.int64))
        return Dataset(np.concatenate(xs), np.concatenate(ys), n_classes,
                       margin, kind, centers)

    # ring: concentric annuli around the box center, 2-D only
    if d != 2:
        raise ConfigurationError("ring datasets require d = 2")
    r_min, r_max = 0.06, 0.46
    width = (r_max - r_min - (n_classes - 1) * margin) / n_classes
    if width <= 0:
        raise ConfigurationError("margin too large for ring bands")
    rng = rng_from(seed, "points", split)
    xs, ys = [], []
    for c in range(n_classes):
        inner = r_min + c * (width + margin)
        radii = rng.uniform(inner, inner + width, size=n_per_class)
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_per_class)
        pts = 0.5 + np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
        xs.append(np.clip(pts, 0.0, 1.0))
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    return Dataset(np.concatenate(xs), np.concatenate(ys), n_classes,
                   margin, kind, None)
