"""Ensemble decision functions: summed logits and hard-label majority vote."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import netcore
from .errors import ConfigurationError
from .netcore import Network
from .seeding import rng_from

ENSEMBLE_FORMAT_HEADER = "VOTECREST-ENSEMBLE v1"

TIE_POLICIES = ("lowest-index", "seeded-random")


@dataclass(frozen=True)
class Ensemble:
    """Ordered member networks sharing input dim and class count.

    ``tie_policy`` picks among vote-count-tied classes: "lowest-index" is
    deterministic; "seeded-random" draws a tied class with a per-input rng
    keyed by ``tie_seed`` (repeat calls on the same input agree).
    """

    members: tuple[Network, ...]
    tie_policy: str = "lowest-index"
    tie_seed: int = 0

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ConfigurationError("an ensemble needs at least one member")
        d, c = members[0].input_dim, members[0].n_classes
        for i, m in enumerate(members):
            if m.input_dim != d or m.n_classes != c:
                raise ConfigurationError(f"member {i} has incompatible dimensions")
        if self.tie_policy not in TIE_POLICIES:
            raise ConfigurationError(f"unknown tie policy {self.tie_policy!r}")
        object.__setattr__(self, "members", members)

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def input_dim(self) -> int:
        return self.members[0].input_dim

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes

    def subset(self, indices) -> "Ensemble":
        return Ensemble(tuple(self.members[i] for i in indices), self.tie_policy, self.tie_seed)


def logits_sum(ens: Ensemble, x: np.ndarray) -> np.ndarray:
    """Componentwise sum of member logits."""
    total = netcore.forward_logits(ens.members[0], x)
    for m in ens.members[1:]:
        total = total + netcore.forward_logits(m, x)
    return total


def vote_counts(ens: Ensemble, x: np.ndarray) -> np.ndarray:
    """Per-class count of members predicting that class; sums to n."""
    counts = np.zeros(ens.n_classes, dtype=np.int64)
    for m in ens.members:
        counts[netcore.predict_label(m, x)] += 1
    return counts


def resolve_vote(ens: Ensemble, counts: np.ndarray, x: np.ndarray) -> int:
    """Winning class for precomputed vote counts, honoring the tie policy."""
    tied = np.flatnonzero(counts == counts.max())
    if len(tied) == 1 or ens.tie_policy == "lowest-index":
        return int(tied[0])
    rng = rng_from(ens.tie_seed, np.asarray(x, dtype=np.float64).tobytes())
    return int(tied[rng.integers(len(tied))])


def majority_vote(ens: Ensemble, x: np.ndarray) -> int:
    """Class with the most member votes, ties resolved per the tie policy."""
    return resolve_vote(ens, vote_counts(ens, x), x)


def save_manifest(path, member_paths, tie_policy: str = "lowest-index", tie_seed: int = 0) -> None:
    """Write an ensemble manifest: ordered member model paths plus tie policy."""
    if tie_policy not in TIE_POLICIES:
        raise ConfigurationError(f"unknown tie policy {tie_policy!r}")
    lines = [ENSEMBLE_FORMAT_HEADER, f"tie_policy: {tie_policy}", f"tie_seed: {tie_seed}"]
    lines += [f"member: {p}" for p in member_paths]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path) -> Ensemble:
    """Load the ensemble described by a manifest; member paths resolve relative to it."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != ENSEMBLE_FORMAT_HEADER:
        raise ConfigurationError(f"{path}: not a {ENSEMBLE_FORMAT_HEADER} file")
    tie_policy, tie_seed = "lowest-index", 0
    members = []
    base = os.path.dirname(os.path.abspath(path))
    for ln in lines[1:]:
        if ln.startswith("tie_policy: "):
            tie_policy = ln[len("tie_policy: "):].strip()
        elif ln.startswith("tie_seed: "):
            tie_seed = int(ln[len("tie_seed: "):])
        elif ln.startswith("member: "):
            member_path = ln[len("member: "):].strip()
            if not os.path.isabs(member_path):
                member_path = os.path.join(base, member_path)
            members.append(netcore.load_network(member_path))
        else:
            raise ConfigurationError(f"{path}: unrecognized manifest line {ln!r}")
    return Ensemble(tuple(members), tie_policy, tie_seed)
