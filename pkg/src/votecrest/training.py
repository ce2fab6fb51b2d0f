"""Loss functions and adversarial training loops for diverse base models.

Four objectives are supported: plain cross-entropy ("standard"), adversarial
training on worst-case cross-entropy points ("pgd-at"), and two smoothness-
regularized variants ("trades", "mart") whose robustness weight is beta.
Training is deterministic mini-batch gradient descent with a fixed rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import netcore
from .base_attacks import (AttackSchedule, PerturbationBudget, ScalarObjective,
                           ce_objective, pgd_attack)
from .errors import ConfigurationError, InputError, TrainingError
from .netcore import Network
from .seeding import derive_seed, rng_from

Array = np.ndarray

OBJECTIVE_KINDS = ("standard", "pgd-at", "trades", "mart")

# floor inside log(1 - p) of the boosted term; keeps the loss finite and >= 0
_BOOST_GUARD = 1e-12


@dataclass(frozen=True)
class InnerSchedule:
    """Schedule of the inner maximization used by the robust objectives."""

    eps: float
    steps: int = 10
    step_size: float | None = None  # defaults to eps / 4

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError("inner eps must be positive")
        if self.steps < 0:
            raise ConfigurationError("inner steps must be nonnegative")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigurationError("inner step_size must be positive")

    @property
    def lr(self) -> float:
        return self.step_size if self.step_size is not None else self.eps / 4.0


@dataclass(frozen=True)
class TrainObjective:
    kind: str
    beta: float = 0.0
    inner: InnerSchedule | None = None

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigurationError(f"unknown training objective {self.kind!r}")
        if self.beta < 0:
            raise ConfigurationError("beta must be nonnegative")
        if self.kind != "standard" and self.inner is None:
            raise ConfigurationError(f"objective {self.kind!r} needs an inner schedule")


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be nonnegative")
        if self.batch_size < 1 or not self.learning_rate > 0:
            raise ConfigurationError("batch_size and learning_rate must be positive")


def ce_loss(logits: Array, y: int) -> float:
    """-log softmax(logits)[y], computed via a stable log-sum-exp."""
    logits = np.asarray(logits, dtype=np.float64)
    val, _ = netcore._ce_value_grad(logits, int(y))
    return float(val)


def cw_margin_loss(logits: Array, y: int, kappa: float = 0.0) -> float:
    """Misclassification margin max(max_{c != y} z_c - z_y, -kappa)."""
    if kappa < 0:
        raise ConfigurationError("kappa must be nonnegative")
    logits = np.asarray(logits, dtype=np.float64)
    val, _ = netcore._cw_value_grad(logits, int(y), kappa)
    return float(val)


def _kl_rows(logp_a: Array, logp_b: Array) -> Array:
    """Row-wise KL(p_a || p_b) from log-probabilities."""
    pa = np.exp(logp_a)
    return (pa * (logp_a - logp_b)).sum(axis=-1)


def _kl_ascent_objective(net: Network, logp_clean: Array) -> ScalarObjective:
    """KL(p(x') || p(x)) with the clean distribution held fixed."""

    def value_and_grad(xp):
        logits, pres, _ = netcore._forward(net, np.asarray(xp, dtype=np.float64))
        logp = netcore._log_softmax(logits)
        p = np.exp(logp)
        kl = float((p * (logp - logp_clean)).sum())
        dldz = p * (logp - logp_clean - kl)
        return kl, netcore._backprop_input(net, pres, dldz)

    return ScalarObjective(value_and_grad, "maximize")


def _inner_point(net: Network, kind: str, x: Array, y: int,
                 inner: InnerSchedule, seed: int) -> Array:
    """Worst-case point for one example under the objective's inner attack."""
    if inner.steps == 0:
        return np.asarray(x, dtype=np.float64)
    budget = PerturbationBudget(inner.eps)
    sched = AttackSchedule(steps=inner.steps, step_size=inner.lr,
                           restarts=1, random_start=True, seed=seed)
    if kind == "trades":
        logp_clean = netcore._log_softmax(netcore.forward_logits(net, x))
        obj = _kl_ascent_objective(net, logp_clean)
    else:  # pgd-at and mart both maximize cross-entropy
        obj = ce_objective(net, int(y))
    return pgd_attack(obj, "maximize", x, y, budget, sched, decision=None).x_adv


def trades_loss(net: Network, x: Array, y: int, beta: float,
                inner: InnerSchedule, seed: int = 0) -> float:
    """Clean cross-entropy plus beta times KL(p(x') || p(x))."""
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    logits = netcore.forward_logits(net, x)
    ce = ce_loss(logits, y)
    if beta == 0:
        return ce
    x_adv = _inner_point(net, "trades", x, y, inner, seed)
    logp_clean = netcore._log_softmax(logits)
    logp_adv = netcore._log_softmax(netcore.forward_logits(net, x_adv))
    return ce + beta * float(_kl_rows(logp_adv, logp_clean))


def mart_loss(net: Network, x: Array, y: int, beta: float,
              inner: InnerSchedule, seed: int = 0) -> float:
    """Boosted cross-entropy at x' plus beta * KL(p(x') || p(x)) * (1 - p_y(x))."""
    if beta < 0:
        raise ConfigurationError("beta must be nonnegative")
    x_adv = _inner_point(net, "mart", x, y, inner, seed)
    logp_clean = netcore._log_softmax(netcore.forward_logits(net, x))
    logp_adv = netcore._log_softmax(netcore.forward_logits(net, x_adv))
    p_adv = np.exp(logp_adv)
    y = int(y)
    rival = netcore._best_rival(p_adv, y)
    boosted = -logp_adv[y] - math.log(max(1.0 - p_adv[rival], _BOOST_GUARD))
    if beta == 0:
        return float(boosted)
    kl = float(_kl_rows(logp_adv, logp_clean))
    return float(boosted + beta * kl * (1.0 - math.exp(logp_clean[y])))


def _batch_grads_and_loss(net: Network, kind: str, beta: float,
                          xs: Array, xs_adv: Array, ys: Array):
    """Mean parameter gradient and mean loss of one batch.

    The inner points ``xs_adv`` are treated as constants; gradients flow
    through every forward pass that appears in the loss.
    """
    b = xs.shape[0]
    if kind in ("standard", "pgd-at"):
        pts = xs if kind == "standard" else xs_adv
        logits, pres, acts = netcore._forward_batch(net, pts)
        logp = netcore._log_softmax(logits)
        p = np.exp(logp)
        dldz = p.copy()
        dldz[np.arange(b), ys] -= 1.0
        loss = float(-logp[np.arange(b), ys].mean())
        dws, dbs = netcore._backprop_params_batch(net, pres, acts, dldz)
        return [dw / b for dw in dws], [db / b for db in dbs], loss

    logits_c, pres_c, acts_c = netcore._forward_batch(net, xs)
    logits_a, pres_a, acts_a = netcore._forward_batch(net, xs_adv)
    logp_c = netcore._log_softmax(logits_c)
    logp_a = netcore._log_softmax(logits_a)
    p_c, p_a = np.exp(logp_c), np.exp(logp_a)
    onehot = np.zeros_like(p_c)
    onehot[np.arange(b), ys] = 1.0
    kl = _kl_rows(logp_a, logp_c)

    if kind == "trades":
        dldz_c = (p_c - onehot) + beta * (p_c - p_a)
        dldz_a = beta * p_a * (logp_a - logp_c - kl[:, None])
        loss = float((-logp_c[np.arange(b), ys] + beta * kl).mean())
    else:  # mart
        p_y = p_c[np.arange(b), ys]
        rivals = np.array([netcore._best_rival(p_a[i], int(ys[i])) for i in range(b)])
        p_m = p_a[np.arange(b), rivals]
        rival_onehot = np.zeros_like(p_a)
        rival_onehot[np.arange(b), rivals] = 1.0
        boosted = -logp_a[np.arange(b), ys] - np.log(np.maximum(1.0 - p_m, _BOOST_GUARD))
        guard_on = (1.0 - p_m) > _BOOST_GUARD
        boost_scale = np.where(guard_on, p_m / np.maximum(1.0 - p_m, _BOOST_GUARD), 0.0)
        dldz_a = (p_a - onehot) + boost_scale[:, None] * (rival_onehot - p_a)
        dldz_a += beta * (1.0 - p_y)[:, None] * p_a * (logp_a - logp_c - kl[:, None])
        dldz_c = beta * ((1.0 - p_y)[:, None] * (p_c - p_a)
                         - (kl * p_y)[:, None] * (onehot - p_c))
        loss = float((boosted + beta * kl * (1.0 - p_y)).mean())

    dws_c, dbs_c = netcore._backprop_params_batch(net, pres_c, acts_c, dldz_c)
    dws_a, dbs_a = netcore._backprop_params_batch(net, pres_a, acts_a, dldz_a)
    dws = [(wc + wa) / b for wc, wa in zip(dws_c, dws_a)]
    dbs = [(bc + ba) / b for bc, ba in zip(dbs_c, dbs_a)]
    return dws, dbs, loss


def train(net: Network, dataset, objective: TrainObjective,
          schedule: TrainSchedule, on_epoch=None) -> Network:
    """Mini-batch gradient descent; returns a new network, input untouched.

    Inner adversarial points are regenerated for every batch. Bit-identical
    results for identical seeds; raises TrainingError with the epoch index if
    the loss stops being finite.
    """
    xs = np.asarray(dataset.X, dtype=np.float64)
    ys = np.asarray(dataset.y, dtype=np.int64)
    if xs.shape[0] == 0:
        raise InputError("training dataset is empty")
    if schedule.epochs == 0:
        return net
    # divergence is detected explicitly, so silence the overflow warnings it emits
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_loop(net, xs, ys, objective, schedule, on_epoch)


def _train_loop(net, xs, ys, objective, schedule, on_epoch):
    weights = [np.array(w) for w in net.weights]
    biases = [np.array(b) for b in net.biases]
    n = xs.shape[0]
    lr = schedule.learning_rate
    for epoch in range(schedule.epochs):
        current = Network(tuple(weights), tuple(biases))
        order = rng_from(schedule.seed, "perm", epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, schedule.batch_size):
            idx = order[start:start + schedule.batch_size]
            xb, yb = xs[idx], ys[idx]
            if objective.kind == "standard":
                xb_adv = xb
            else:
                xb_adv = np.stack([
                    _inner_point(current, objective.kind, xb[i], yb[i], objective.inner,
                                 derive_seed(schedule.seed, "inner", epoch, int(idx[i])))
                    for i in range(len(idx))
                ])
            dws, dbs, loss = _batch_grads_and_loss(current, objective.kind,
                                                   objective.beta, xb, xb_adv, yb)
            if not math.isfinite(loss):
                raise TrainingError("training loss is not finite", epoch=epoch)
            weights = [w - lr * dw for w, dw in zip(weights, dws)]
            biases = [b - lr * db for b, db in zip(biases, dbs)]
            if not all(np.isfinite(a).all() for a in weights + biases):
                raise TrainingError("parameters diverged to non-finite values", epoch=epoch)
            current = Network(tuple(weights), tuple(biases))
            epoch_loss += loss * len(idx)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss / n)
    return Network(tuple(weights), tuple(biases))
