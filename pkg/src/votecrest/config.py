"""Experiment configuration: one JSON document, validated fail-fast.

Unknown keys are rejected everywhere. Every random choice is keyed by an
explicit seed in the config; nothing draws implicit entropy. Attack presets
fill in whatever the config leaves null: the "toy" preset scales epsilon to
the dataset margin, while "cifar-paper" carries the full-scale settings
(eps 0.03, 150 iterations, step 0.007, kappa 0) for externally wired models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .base_attacks import ATTACK_PRESETS
from .datasets import DATASET_KINDS
from .ensemble import TIE_POLICIES
from .ensemble_attacks import ENSEMBLE_ATTACK_NAMES
from .errors import ConfigurationError
from .training import OBJECTIVE_KINDS

PRESETS = ("toy", "cifar-paper")

CIFAR_PAPER_ATTACK = {"epsilon": 0.03, "steps": 150, "step_size": 0.007, "kappa": 0.0}

TOY_ATTACK = {"eps_margin_ratio": 0.25, "steps": 40, "kappa": 0.0}


def _take(raw: dict, context: str, required: tuple, optional: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{context}: expected an object")
    out = {}
    data = dict(raw)
    for key in required:
        if key not in data:
            raise ConfigurationError(f"{context}: missing required key {key!r}")
        out[key] = data.pop(key)
    for key, default in optional.items():
        out[key] = data.pop(key, default)
    if data:
        raise ConfigurationError(f"{context}: unknown keys {sorted(data)}")
    return out


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    d: int
    n_classes: int
    n_per_class: int
    margin: float
    seed: int
    eval_n_per_class: int
    support_radius: float | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigurationError(f"dataset.kind must be one of {DATASET_KINDS}")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    objective: str
    seed: int
    beta: float = 0.0
    hidden: tuple = ()

    def __post_init__(self):
        if self.objective not in OBJECTIVE_KINDS:
            raise ConfigurationError(f"model {self.name!r}: unknown objective {self.objective!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


@dataclass(frozen=True)
class TrainSpec:
    epochs: int
    batch_size: int
    learning_rate: float
    inner_steps: int = 10


@dataclass(frozen=True)
class AttackSpec:
    epsilon: float | None = None
    steps: int | None = None
    step_size: float | None = None
    restarts: int = 1
    random_start: bool = False
    kappa: float = 0.0


@dataclass(frozen=True)
class SelectionSpec:
    k: int
    r: int = 512
    attack: str = "pgd-cw"

    def __post_init__(self):
        if self.attack not in ATTACK_PRESETS:
            raise ConfigurationError(f"selection.attack must be one of {ATTACK_PRESETS}")


@dataclass(frozen=True)
class DiversitySpec:
    attacks: tuple = ("pgd-ce", "pgd-cw")
    n_points: int = 40

    def __post_init__(self):
        for a in self.attacks:
            if a not in ATTACK_PRESETS:
                raise ConfigurationError(f"diversity attack {a!r} unknown")
        object.__setattr__(self, "attacks", tuple(self.attacks))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    repeats: int
    preset: str
    dataset: DatasetSpec
    models: tuple
    train: TrainSpec
    attack: AttackSpec
    single_attacks: tuple
    ensembles: tuple          # tuples of model names
    ensemble_attacks: tuple
    tie_policy: str
    tie_seed: int
    selection: SelectionSpec | None
    diversity: DiversitySpec | None
    vary_seeds_across_repeats: bool
    output_dir: str | None

    @property
    def epsilon(self) -> float:
        if self.attack.epsilon is not None:
            return float(self.attack.epsilon)
        if self.preset == "cifar-paper":
            return CIFAR_PAPER_ATTACK["epsilon"]
        return TOY_ATTACK["eps_margin_ratio"] * self.dataset.margin

    @property
    def attack_steps(self) -> int:
        if self.attack.steps is not None:
            return int(self.attack.steps)
        return CIFAR_PAPER_ATTACK["steps"] if self.preset == "cifar-paper" else TOY_ATTACK["steps"]

    @property
    def attack_step_size(self) -> float:
        if self.attack.step_size is not None:
            return float(self.attack.step_size)
        if self.preset == "cifar-paper":
            return CIFAR_PAPER_ATTACK["step_size"]
        return self.epsilon / 8.0

    def model_named(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigurationError(f"unknown model name {name!r}")


def parse_config(doc: dict, preset: str = "toy") -> ExperimentConfig:
    if preset not in PRESETS:
        raise ConfigurationError(f"preset must be one of {PRESETS}")
    top = _take(doc, "config", ("name", "seed", "dataset", "models", "train"), {
        "repeats": 3,
        "preset": preset,
        "attack": {},
        "single_attacks": list(ATTACK_PRESETS),
        "ensembles": [],
        "ensemble_attacks": ["ls-ce", "ls-cw", "wa-ce", "wa-cw", "os-cw", "maj-subset-cw"],
        "tie_policy": "lowest-index",
        "tie_seed": 0,
        "selection": None,
        "diversity": None,
        "vary_seeds_across_repeats": True,
        "output_dir": None,
    })

    ds = _take(top["dataset"], "dataset",
               ("kind", "d", "n_classes", "n_per_class", "margin", "seed"),
               {"eval_n_per_class": None, "support_radius": None})
    if ds["eval_n_per_class"] is None:
        ds["eval_n_per_class"] = ds["n_per_class"]
    dataset = DatasetSpec(**ds)

    models = []
    for i, m in enumerate(top["models"]):
        spec = _take(m, f"models[{i}]", ("name", "objective", "seed"),
                     {"beta": 0.0, "hidden": []})
        models.append(ModelSpec(**spec))
    if not models:
        raise ConfigurationError("at least one model is required")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigurationError("model names must be unique")

    train = TrainSpec(**_take(top["train"], "train",
                              ("epochs", "batch_size", "learning_rate"),
                              {"inner_steps": 10}))
    attack = AttackSpec(**_take(top["attack"], "attack", (), {
        "epsilon": None, "steps": None, "step_size": None,
        "restarts": 1, "random_start": False, "kappa": 0.0}))

    for a in top["single_attacks"]:
        if a not in ATTACK_PRESETS:
            raise ConfigurationError(f"single attack {a!r} unknown")
    for a in top["ensemble_attacks"]:
        if a not in ENSEMBLE_ATTACK_NAMES:
            raise ConfigurationError(f"ensemble attack {a!r} unknown")
    if top["tie_policy"] not in TIE_POLICIES:
        raise ConfigurationError(f"tie_policy must be one of {TIE_POLICIES}")

    ensembles = []
    for i, member_names in enumerate(top["ensembles"]):
        if not member_names:
            raise ConfigurationError(f"ensembles[{i}] is empty")
        for name in member_names:
            if name not in names:
                raise ConfigurationError(f"ensembles[{i}] references unknown model {name!r}")
        ensembles.append(tuple(member_names))

    selection = None
    if top["selection"] is not None:
        selection = SelectionSpec(**_take(top["selection"], "selection", ("k",),
                                          {"r": 512, "attack": "pgd-cw"}))
        if selection.k > len(models):
            raise ConfigurationError("selection.k exceeds the model pool size")

    diversity = None
    if top["diversity"] is not None:
        diversity = DiversitySpec(**_take(top["diversity"], "diversity", (), {
            "attacks": ["pgd-ce", "pgd-cw"], "n_points": 40}))

    if int(top["repeats"]) < 1:
        raise ConfigurationError("repeats must be >= 1")

    return ExperimentConfig(
        name=str(top["name"]), seed=int(top["seed"]), repeats=int(top["repeats"]),
        preset=str(top["preset"]), dataset=dataset, models=tuple(models),
        train=train, attack=attack,
        single_attacks=tuple(top["single_attacks"]),
        ensembles=tuple(ensembles),
        ensemble_attacks=tuple(top["ensemble_attacks"]),
        tie_policy=str(top["tie_policy"]), tie_seed=int(top["tie_seed"]),
        selection=selection, diversity=diversity,
        vary_seeds_across_repeats=bool(top["vary_seeds_across_repeats"]),
        output_dir=top["output_dir"])


def load_config(path, preset: str = "toy") -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, preset=preset)


def builtin_config_path(name: str = "toy-paper"):
    """Filesystem path of a reference config shipped with the package."""
    from importlib import resources
    path = resources.files("votecrest").joinpath("configs", f"{name}.json")
    if not path.is_file():
        raise ConfigurationError(f"no shipped config named {name!r}")
    return str(path)
