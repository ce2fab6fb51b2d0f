"""Single-objective projected-gradient attacks under an l-inf budget.

The step rule is the standard signed-gradient update projected back onto the
ball intersected with the input box. Attacks are pure per example: fixed
seeds give bit-identical outputs, and any per-example randomness is keyed by
the input bytes so parallel execution order never matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore
from .errors import AttackError, ConfigurationError, InputError
from .netcore import Network
from .seeding import rng_from

Array = np.ndarray

ATTACK_PRESETS = ("pgd-ce", "pgd-cw")

DIRECTIONS = ("maximize", "minimize")


@dataclass(frozen=True)
class PerturbationBudget:
    """l-inf ball of radius eps intersected with the input box [lo, hi]^d."""

    eps: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")
        if not self.lo < self.hi:
            raise ConfigurationError("box bounds must satisfy lo < hi")


@dataclass(frozen=True)
class AttackSchedule:
    """Iteration budget for a projected-gradient attack."""

    steps: int
    step_size: float
    restarts: int = 1
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if not self.step_size > 0:
            raise ConfigurationError("step_size must be positive")
        if self.restarts < 0:
            raise ConfigurationError("restarts must be nonnegative")


@dataclass
class AttackResult:
    """Outcome for one (example, attack) pair.

    ``success`` means the judged decision function disagreed with the true
    label at ``x_adv``. ``trace`` optionally records objective values (or
    richer per-step state for the greedy ensemble attack).
    """

    x_adv: Array
    success: bool
    steps_used: int
    trace: list | None = None
    objective_value: float | None = None


class ScalarObjective:
    """Differentiable scalar of the input, with its preferred attack direction."""

    def __init__(self, value_and_grad, attack_direction: str):
        if attack_direction not in DIRECTIONS:
            raise ConfigurationError(f"unknown direction {attack_direction!r}")
        self.value_and_grad = value_and_grad
        self.attack_direction = attack_direction

    def value(self, x: Array) -> float:
        return self.value_and_grad(x)[0]


def ce_objective(net: Network, y: int) -> ScalarObjective:
    """Cross-entropy of the true label; attacks push it up."""

    def value_and_grad(x):
        x = netcore._check_input(net, x)
        logits, pres, _ = netcore._forward(net, x)
        val, dldz = netcore._ce_value_grad(logits, y)
        return float(val), netcore._backprop_input(net, pres, dldz)

    return ScalarObjective(value_and_grad, "maximize")


def cw_objective(net: Network, y: int, kappa: float = 0.0) -> ScalarObjective:
    """Margin of the true class over its best rival, floored at -kappa.

    Attacks push it down; at the floor the prediction has flipped with the
    requested confidence.
    """

    def value_and_grad(x):
        x = netcore._check_input(net, x)
        logits, pres, _ = netcore._forward(net, x)
        val, dldz = netcore._rival_margin_value_grad(logits, y, kappa)
        return float(val), netcore._backprop_input(net, pres, dldz)

    return ScalarObjective(value_and_grad, "minimize")


def project(x_cand: Array, x_orig: Array, budget: PerturbationBudget) -> Array:
    """Clamp the perturbation to [-eps, eps] componentwise, then to the box."""
    delta = np.clip(x_cand - x_orig, -budget.eps, budget.eps)
    return np.clip(x_orig + delta, budget.lo, budget.hi)


def _signed_step(x_adv, grad, signed_lr, x_orig, budget):
    # shared by pgd_attack and the greedy ensemble attack so that degenerate
    # reductions agree bit for bit
    return project(x_adv + signed_lr * np.sign(grad), x_orig, budget)


def check_result(budget: PerturbationBudget, x_orig: Array, result: AttackResult) -> AttackResult:
    """Raise unless x_adv is inside the ball (1e-9 slack) and the box."""
    delta = result.x_adv - x_orig
    if np.abs(delta).max() > budget.eps + 1e-9:
        raise AttackError(f"perturbation exceeds budget eps={budget.eps}")
    if (result.x_adv < budget.lo).any() or (result.x_adv > budget.hi).any():
        raise AttackError("adversarial point escaped the input box")
    return result


def pgd_attack(
    objective: ScalarObjective,
    direction: str,
    x: Array,
    y: int,
    budget: PerturbationBudget,
    schedule: AttackSchedule,
    *,
    decision=None,
    early_stop: bool = True,
    record_trace: bool = False,
) -> AttackResult:
    """Iterated signed-gradient steps on ``objective``, projected into the budget.

    ``decision`` maps an input to a label; when given, success is judged by
    ``decision(x_adv) != y`` and (with ``early_stop``) iteration stops as soon
    as the decision flips. With several restarts, the first successful run
    wins; if none succeed the run with the best final objective value does.
    """
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"unknown direction {direction!r}")
    x = np.asarray(x, dtype=np.float64)
    if (x < budget.lo).any() or (x > budget.hi).any():
        raise InputError("attack origin lies outside the input box")
    signed_lr = schedule.step_size if direction == "maximize" else -schedule.step_size

    if early_stop and decision is not None and decision(x) != y:
        val = float(objective.value(x))
        return AttackResult(x.copy(), True, 0,
                            trace=[val] if record_trace else None,
                            objective_value=val)

    runs = max(1, schedule.restarts)
    fallback = None
    for r in range(runs):
        x_adv = x
        if schedule.random_start or r > 0:
            rng = rng_from(schedule.seed, r, x.tobytes())
            x_adv = project(x + rng.uniform(-budget.eps, budget.eps, size=x.shape), x, budget)
        trace = [] if record_trace else None
        steps_used = 0
        for _ in range(schedule.steps):
            if early_stop and decision is not None and decision(x_adv) != y:
                break
            val, grad = objective.value_and_grad(x_adv)
            if not (np.isfinite(val) and np.isfinite(grad).all()):
                raise AttackError("non-finite objective or gradient during attack")
            if record_trace:
                trace.append(float(val))
            x_adv = _signed_step(x_adv, grad, signed_lr, x, budget)
            steps_used += 1
        final_val = float(objective.value(x_adv))
        if record_trace:
            trace.append(final_val)
        success = bool(decision(x_adv) != y) if decision is not None else False
        result = check_result(budget, x, AttackResult(x_adv, success, steps_used, trace, final_val))
        if success:
            return result
        better = fallback is None or (
            final_val > fallback.objective_value if direction == "maximize"
            else final_val < fallback.objective_value)
        if better:
            fallback = result
    return fallback


def robust_accuracy(decision, dataset, attack) -> float:
    """Fraction of points whose decision survives the attack.

    The decision function is re-applied to each attacked point; the attack's
    own success flag is never trusted.
    """
    pairs = list(dataset)
    if not pairs:
        raise InputError("robust_accuracy needs a nonempty dataset")
    correct = sum(1 for x, y in pairs if decision(attack(x, y).x_adv) == y)
    return correct / len(pairs)


def make_single_model_attack(name: str, budget: PerturbationBudget,
                             schedule: AttackSchedule, kappa: float = 0.0):
    """Named attack preset against one model: "pgd-ce" or "pgd-cw".

    Returns a callable (model, x, y) -> AttackResult judged by the model's
    own label.
    """
    if name not in ATTACK_PRESETS:
        raise ConfigurationError(f"unknown attack preset {name!r}")

    def attack(model: Network, x: Array, y: int) -> AttackResult:
        if name == "pgd-ce":
            obj = ce_objective(model, y)
        else:
            obj = cw_objective(model, y, kappa)
        return pgd_attack(obj, obj.attack_direction, x, y, budget, schedule,
                          decision=lambda z: netcore.predict_label(model, z))

    return attack
