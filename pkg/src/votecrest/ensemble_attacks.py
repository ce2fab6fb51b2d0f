"""White-box attack strategies against a majority-vote ensemble.

Four strategies, each layered on the projected-gradient machinery:

- ``ls``: attack the componentwise sum of member logits.
- ``wa``: greedy loop that steps against the weakest still-correct member.
- ``os``: attack the sum of per-member objectives (margin loss by default).
- ``maj-subset``: run ``os`` over every ceil(n/2)-subset, worst case per point.

Success is always judged by re-running the full ensemble's majority vote on
the attacked point, never by per-member flags.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from . import netcore
from .base_attacks import (AttackResult, AttackSchedule, PerturbationBudget,
                           ScalarObjective, ce_objective, check_result,
                           cw_objective, pgd_attack, project, _signed_step)
from .ensemble import Ensemble, majority_vote, resolve_vote
from .errors import AttackError, ConfigurationError, PreconditionError
from .seeding import rng_from

Array = np.ndarray

STRATEGIES = ("ls", "wa", "os", "maj-subset")

BASE_OBJECTIVES = ("ce", "cw")

ENSEMBLE_ATTACK_NAMES = tuple(f"{s}-{o}" for s in STRATEGIES for o in BASE_OBJECTIVES)


def _check_base_objective(base_objective: str) -> str:
    if base_objective not in BASE_OBJECTIVES:
        raise ConfigurationError(f"unknown base objective {base_objective!r}")
    return base_objective


def ls_objective(ens: Ensemble, base_objective: str, y: int, kappa: float = 0.0) -> ScalarObjective:
    """The chosen loss evaluated on the summed logits of all members."""
    _check_base_objective(base_objective)
    first = ens.members[0]

    def value_and_grad(x):
        x = netcore._check_input(first, x)
        forwards = [netcore._forward(m, x) for m in ens.members]
        zsum = forwards[0][0]
        for logits, _, _ in forwards[1:]:
            zsum = zsum + logits
        if base_objective == "ce":
            val, dldz = netcore._ce_value_grad(zsum, y)
        else:
            val, dldz = netcore._rival_margin_value_grad(zsum, y, kappa)
        grad = netcore._backprop_input(ens.members[0], forwards[0][1], dldz)
        for m, (_, pres, _) in zip(ens.members[1:], forwards[1:]):
            grad = grad + netcore._backprop_input(m, pres, dldz)
        return float(val), grad

    return ScalarObjective(value_and_grad, "maximize" if base_objective == "ce" else "minimize")


def os_objective(ens: Ensemble, base_objective: str, y: int, kappa: float = 0.0) -> ScalarObjective:
    """Sum of the per-member attack objective over all members."""
    _check_base_objective(base_objective)
    first = ens.members[0]

    def value_and_grad(x):
        x = netcore._check_input(first, x)
        total = 0.0
        grad = np.zeros_like(x)
        for m in ens.members:
            logits, pres, _ = netcore._forward(m, x)
            if base_objective == "ce":
                val, dldz = netcore._ce_value_grad(logits, y)
            else:
                val, dldz = netcore._rival_margin_value_grad(logits, y, kappa)
            total += float(val)
            grad = grad + netcore._backprop_input(m, pres, dldz)
        return total, grad

    return ScalarObjective(value_and_grad, "maximize" if base_objective == "ce" else "minimize")


def ls_attack(ens: Ensemble, base_objective: str, x: Array, y: int,
              budget: PerturbationBudget, schedule: AttackSchedule, *,
              kappa: float = 0.0, early_stop: bool = True,
              record_trace: bool = False) -> AttackResult:
    """Projected-gradient attack on the summed logits, judged by majority vote."""
    obj = ls_objective(ens, base_objective, y, kappa)
    return pgd_attack(obj, obj.attack_direction, x, y, budget, schedule,
                      decision=lambda z: majority_vote(ens, z),
                      early_stop=early_stop, record_trace=record_trace)


def weakest_model_index(ens: Ensemble, x: Array, y: int) -> int:
    """Among members predicting y, the one with the lowest probability on y.

    Members predicting another label never win while any correct member
    exists; ties go to the lowest index. Must be called while some member
    still predicts y (guaranteed whenever the majority vote equals y).
    """
    y = int(y)
    best, best_p = None, np.inf
    for i, m in enumerate(ens.members):
        probs = netcore.softmax_probs(m, x)
        if int(np.argmax(probs)) != y:
            continue
        if probs[y] < best_p:
            best, best_p = i, probs[y]
    if best is None:
        raise PreconditionError("no ensemble member predicts the true label")
    return best


def wa_attack(ens: Ensemble, base_objective: str, x: Array, y: int,
              budget: PerturbationBudget, schedule: AttackSchedule, *,
              kappa: float = 0.0, record_trace: bool = False) -> AttackResult:
    """Greedy attack: one projected step per iteration against the weakest member.

    Stops as soon as the majority vote leaves the true label, or after
    ``schedule.steps`` total steps. Restarts do not apply (single greedy loop).
    When tracing, each record holds the per-member (correct, p_y) state and
    the member index that was attacked.
    """
    _check_base_objective(base_objective)
    x = np.asarray(x, dtype=np.float64)
    signed_lr = schedule.step_size if base_objective == "ce" else -schedule.step_size
    if majority_vote(ens, x) != y:
        return AttackResult(x.copy(), True, 0, trace=[] if record_trace else None)
    x_adv = x
    if schedule.random_start:
        rng = rng_from(schedule.seed, 0, x.tobytes())
        x_adv = project(x + rng.uniform(-budget.eps, budget.eps, size=x.shape), x, budget)
    y = int(y)
    trace = [] if record_trace else None
    steps_used = 0
    for _ in range(schedule.steps):
        # one forward pass per member yields the vote and the weakness state
        states = []
        counts = np.zeros(ens.n_classes, dtype=np.int64)
        for m in ens.members:
            probs = netcore.softmax_probs(m, x_adv)
            label = int(np.argmax(probs))
            counts[label] += 1
            states.append((label == y, float(probs[y])))
        if resolve_vote(ens, counts, x_adv) != y:
            break
        target, best_p = -1, np.inf
        for i, (ok, p_y) in enumerate(states):
            if ok and p_y < best_p:
                target, best_p = i, p_y
        member = ens.members[target]
        obj = ce_objective(member, y) if base_objective == "ce" else cw_objective(member, y, kappa)
        val, grad = obj.value_and_grad(x_adv)
        if not (np.isfinite(val) and np.isfinite(grad).all()):
            raise AttackError("non-finite gradient during greedy attack")
        if record_trace:
            trace.append({"states": states, "attacked": target})
        x_adv = _signed_step(x_adv, grad, signed_lr, x, budget)
        steps_used += 1
    success = majority_vote(ens, x_adv) != y
    return check_result(budget, x, AttackResult(x_adv, success, steps_used, trace))


def os_attack(ens_subset: Ensemble, x: Array, y: int,
              budget: PerturbationBudget, schedule: AttackSchedule, *,
              base_objective: str = "cw", kappa: float = 0.0,
              judge: Ensemble | None = None, early_stop: bool = True,
              record_trace: bool = False) -> AttackResult:
    """Attack the summed per-member objective of ``ens_subset``.

    ``judge`` (default: the subset itself) is the ensemble whose majority
    vote decides success; the subset attack inside ``maj-subset`` judges
    against the full ensemble.
    """
    judge = ens_subset if judge is None else judge
    obj = os_objective(ens_subset, base_objective, y, kappa)
    return pgd_attack(obj, obj.attack_direction, x, y, budget, schedule,
                      decision=lambda z: majority_vote(judge, z),
                      early_stop=early_stop, record_trace=record_trace)


def majority_subset_attack(ens: Ensemble, x: Array, y: int,
                           budget: PerturbationBudget, schedule: AttackSchedule, *,
                           base_objective: str = "cw", kappa: float = 0.0,
                           subset_cap: int = 252) -> AttackResult:
    """Run the summed-objective attack over every ceil(n/2)-subset of members.

    Returns the first succeeding subset's result (subsets enumerated in
    lexicographic order), else the failing result with the best final
    objective value. A point counts as robust only if no subset succeeds.
    """
    n = ens.n_members
    m = math.ceil(n / 2)
    if math.comb(n, m) > subset_cap:
        raise ConfigurationError(
            f"{math.comb(n, m)} subsets exceed the cap of {subset_cap}")
    minimize = base_objective == "cw"
    best = None
    for subset in combinations(range(n), m):
        result = os_attack(ens.subset(subset), x, y, budget, schedule,
                           base_objective=base_objective, kappa=kappa, judge=ens)
        if result.success:
            return result
        better = best is None or (
            result.objective_value < best.objective_value if minimize
            else result.objective_value > best.objective_value)
        if better:
            best = result
    return best


def make_ensemble_attack(name: str, budget: PerturbationBudget,
                         schedule: AttackSchedule, kappa: float = 0.0):
    """Named strategy preset, e.g. "wa-cw": callable (ens, x, y) -> AttackResult."""
    if name not in ENSEMBLE_ATTACK_NAMES:
        raise ConfigurationError(f"unknown ensemble attack {name!r}")
    strategy, objective = name.rsplit("-", 1)

    def attack(ens: Ensemble, x: Array, y: int) -> AttackResult:
        if strategy == "ls":
            return ls_attack(ens, objective, x, y, budget, schedule, kappa=kappa)
        if strategy == "wa":
            return wa_attack(ens, objective, x, y, budget, schedule, kappa=kappa)
        if strategy == "os":
            return os_attack(ens, x, y, budget, schedule,
                             base_objective=objective, kappa=kappa)
        return majority_subset_attack(ens, x, y, budget, schedule,
                                      base_objective=objective, kappa=kappa)

    return attack
