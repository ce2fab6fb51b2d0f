"""Minimal dense rectifier classifiers with hand-rolled forward/backward passes.

A :class:`Network` is a stack of affine layers with rectifier hidden units and
raw logits at the output. Everything here is pure and operates on 64-bit
floats; networks are immutable once constructed, so they can be shared freely
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError

Array = np.ndarray

NET_FORMAT_HEADER = "VOTECREST-NET v1"

LOSS_KINDS = ("cross-entropy", "cw-margin")


@dataclass(frozen=True)
class Network:
    """Feed-forward classifier.

    ``weights[t]`` has shape (out_t, in_t), ``biases[t]`` shape (out_t,).
    Hidden layers apply max(z, 0); the final layer emits raw logits.
    """

    weights: tuple[Array, ...]
    biases: tuple[Array, ...]

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise ConfigurationError("need one bias vector per weight matrix")
        for t, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ConfigurationError(f"layer {t}: weight/bias shapes disagree")
            if t > 0 and w.shape[1] != ws[t - 1].shape[0]:
                raise ConfigurationError(f"layer {t}: input dim does not chain")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ConfigurationError(f"layer {t}: non-finite parameters")
        if ws[-1].shape[0] < 2:
            raise ConfigurationError("output layer must have at least 2 classes")
        for w, b in zip(ws, bs):
            w.flags.writeable = False
            b.flags.writeable = False
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class LossSpec:
    """Scalar classification loss evaluated on logits for a target label.

    ``kind`` is "cross-entropy" or "cw-margin"; ``kappa`` only applies to the
    margin loss (>= 0).
    """

    kind: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss kind {self.kind!r}")
        if self.kappa < 0:
            raise ConfigurationError("kappa must be nonnegative")


def init_network(layer_dims, seed: int) -> Network:
    """Build a network with zero-mean 1/sqrt(fan_in)-scaled weights, zero biases.

    Deterministic for a fixed (layer_dims, seed) pair.
    """
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ConfigurationError("layer_dims needs at least an input and an output dim")
    if any(int(d) != d or d < 1 for d in dims):
        raise ConfigurationError(f"layer dims must be positive integers, got {dims}")
    if dims[-1] < 2:
        raise ConfigurationError("output dim (class count) must be >= 2")
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(tuple(weights), tuple(biases))


def _check_input(net: Network, x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise InputError(f"expected input of length {net.input_dim}, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise InputError("input contains NaN or Inf")
    return x


def _forward(net: Network, x: Array):
    """Forward pass keeping per-layer preactivations and layer inputs."""
    pres = []
    acts = [x]
    h = x
    last = net.n_layers - 1
    for t, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ h + b
        pres.append(z)
        if t < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return pres[-1], pres, acts


def _backprop_input(net: Network, pres, grad_logits: Array) -> Array:
    """Gradient w.r.t. the input given dLoss/dlogits. Rectifier derivative at 0 is 0."""
    g = grad_logits
    for t in range(net.n_layers - 1, -1, -1):
        g = net.weights[t].T @ g
        if t > 0:
            g = g * (pres[t - 1] > 0)
    return g


def _backprop_params(net: Network, pres, acts, grad_logits: Array):
    """Per-layer (dW, db) given dLoss/dlogits for a single example."""
    dws = [None] * net.n_layers
    dbs = [None] * net.n_layers
    g = grad_logits
    for t in range(net.n_layers - 1, -1, -1):
        dws[t] = np.outer(g, acts[t])
        dbs[t] = g
        if t > 0:
            g = (net.weights[t].T @ g) * (pres[t - 1] > 0)
    return dws, dbs


def _forward_batch(net: Network, xs: Array):
    """Batched forward pass: xs has shape (B, d). Returns (logits, pres, acts)."""
    pres = []
    acts = [xs]
    h = xs
    last = net.n_layers - 1
    for t, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pres.append(z)
        if t < last:
            h = np.maximum(z, 0.0)
            acts.append(h)
    return pres[-1], pres, acts


def _backprop_params_batch(net: Network, pres, acts, grad_logits: Array):
    """Summed per-layer (dW, db) over a batch given dLoss/dlogits rows."""
    dws = [None] * net.n_layers
    dbs = [None] * net.n_layers
    g = grad_logits
    for t in range(net.n_layers - 1, -1, -1):
        dws[t] = g.T @ acts[t]
        dbs[t] = g.sum(axis=0)
        if t > 0:
            g = (g @ net.weights[t]) * (pres[t - 1] > 0)
    return dws, dbs


def _softmax(logits: Array) -> Array:
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _ce_value_grad(logits: Array, y: int):
    """Cross-entropy -log softmax(logits)[y] and its gradient w.r.t. logits."""
    logp = _log_softmax(logits)
    grad = np.exp(logp)
    grad[y] -= 1.0
    return -logp[y], grad


def _best_rival(logits: Array, y: int) -> int:
    """Index of the largest logit among classes != y (lowest index on ties)."""
    masked = logits.copy()
    masked[y] = -np.inf
    return int(np.argmax(masked))


def _cw_value_grad(logits: Array, y: int, kappa: float):
    """Misclassification margin max(max_{c!=y} z_c - z_y, -kappa) and gradient.

    Below the floor the function is flat, so the gradient there is zero (the
    same flat-side convention as the rectifier at 0).
    """
    c = _best_rival(logits, y)
    raw = logits[c] - logits[y]
    grad = np.zeros_like(logits)
    if raw > -kappa:
        grad[c] = 1.0
        grad[y] = -1.0
        return raw, grad
    return -kappa, grad


def _rival_margin_value_grad(logits: Array, y: int, kappa: float):
    """Lead of the true class over its best rival, floored at -kappa.

    value = max(z_y - max_{c!=y} z_c, -kappa). Driving this to the floor flips
    the prediction; it is the objective the margin-based attacks minimize.
    """
    c = _best_rival(logits, y)
    raw = logits[y] - logits[c]
    grad = np.zeros_like(logits)
    if raw > -kappa:
        grad[y] = 1.0
        grad[c] = -1.0
        return raw, grad
    return -kappa, grad


def _loss_value_grad(loss: LossSpec, logits: Array, y: int):
    if loss.kind == "cross-entropy":
        return _ce_value_grad(logits, y)
    return _cw_value_grad(logits, y, loss.kappa)


def forward_logits(net: Network, x: Array) -> Array:
    """Raw class scores for one input vector."""
    x = _check_input(net, x)
    logits, _, _ = _forward(net, x)
    return logits


def predict_label(net: Network, x: Array) -> int:
    """Argmax class; ties resolve to the lowest class index."""
    return int(np.argmax(forward_logits(net, x)))


def softmax_probs(net: Network, x: Array) -> Array:
    """Class probabilities, stabilized by max-logit subtraction."""
    return _softmax(forward_logits(net, x))


def _check_label(net: Network, y: int) -> int:
    y = int(y)
    if not 0 <= y < net.n_classes:
        raise InputError(f"label {y} outside [0, {net.n_classes})")
    return y


def input_gradient(net: Network, loss: LossSpec, x: Array, y: int) -> Array:
    """Exact gradient of the scalar loss w.r.t. the input."""
    x = _check_input(net, x)
    y = _check_label(net, y)
    logits, pres, _ = _forward(net, x)
    _, grad_logits = _loss_value_grad(loss, logits, y)
    return _backprop_input(net, pres, grad_logits)


def param_gradient(net: Network, loss: LossSpec, xs: Array, ys: Array):
    """Mean gradient of the loss over a batch, per layer.

    Returns (dws, dbs): lists of arrays shaped like the network parameters.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise InputError("param_gradient needs a nonempty (B, d) batch")
    if xs.shape[0] != ys.shape[0]:
        raise InputError("batch inputs and labels disagree in length")
    if xs.shape[1] != net.input_dim:
        raise InputError(f"batch feature dim {xs.shape[1]} != network input dim {net.input_dim}")
    logits, pres, acts = _forward_batch(net, xs)
    grad_logits = np.empty_like(logits)
    for i in range(xs.shape[0]):
        _, grad_logits[i] = _loss_value_grad(loss, logits[i], _check_label(net, ys[i]))
    dws, dbs = _backprop_params_batch(net, pres, acts, grad_logits)
    b = xs.shape[0]
    return [dw / b for dw in dws], [db / b for db in dbs]


def save_network(net: Network, path) -> None:
    """Write the flat text format; 17 significant digits keeps float64 exact."""
    lines = [NET_FORMAT_HEADER, "dims: " + " ".join(str(d) for d in net.layer_dims)]
    for w, b in zip(net.weights, net.biases):
        lines.append("W")
        for row in w:
            lines.append(" ".join("%.17g" % v for v in row))
        lines.append("b " + " ".join("%.17g" % v for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> Network:
    """Read the flat text format written by :func:`save_network`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != NET_FORMAT_HEADER:
        raise ConfigurationError(f"{path}: not a {NET_FORMAT_HEADER} file")
    if len(lines) < 2 or not lines[1].startswith("dims: "):
        raise ConfigurationError(f"{path}: missing dims line")
    try:
        dims = [int(tok) for tok in lines[1][len("dims: "):].split()]
    except ValueError as exc:
        raise ConfigurationError(f"{path}: bad dims line") from exc
    pos = 2
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if pos >= len(lines) or lines[pos] != "W":
            raise ConfigurationError(f"{path}: expected a W block at line {pos + 1}")
        pos += 1
        rows = []
        for _ in range(fan_out):
            if pos >= len(lines):
                raise ConfigurationError(f"{path}: truncated W block")
            rows.append([float(tok) for tok in lines[pos].split()])
            if len(rows[-1]) != fan_in:
                raise ConfigurationError(f"{path}: row length != {fan_in} at line {pos + 1}")
            pos += 1
        if pos >= len(lines) or not lines[pos].startswith("b "):
            raise ConfigurationError(f"{path}: expected a b line at line {pos + 1}")
        bias = [float(tok) for tok in lines[pos][2:].split()]
        if len(bias) != fan_out:
            raise ConfigurationError(f"{path}: bias length != {fan_out} at line {pos + 1}")
        pos += 1
        weights.append(np.array(rows))
        biases.append(np.array(bias))
    return Network(tuple(weights), tuple(biases))
