"""Small deterministic numerics: dense MLPs with hand-written backprop,
heavy-ball SGD, the cosine learning-rate schedule and probability helpers.

Everything operates on row-major batches (``x`` has shape ``[B, in]``); a
1-D vector is accepted and treated as a batch of one.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, DivergenceError, InvariantError

ACTIVATIONS = ("relu", "none")
LOG_EPS = 1e-12


@dataclass
class Layer:
    weight: np.ndarray  # [out, in]
    bias: np.ndarray  # [out]
    activation: str = "none"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ConfigurationError("bias must have one entry per weight row")


@dataclass
class Mlp:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("an Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[0] != nxt.weight.shape[1]:
                raise ConfigurationError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def params(self) -> list:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])


def init_mlp(dims, rng: np.random.Generator, hidden_activation="relu", output_activation="none") -> Mlp:
    """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    if len(dims) < 2:
        raise ConfigurationError("dims must list at least an input and an output size")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(Layer(w, np.zeros(n_out), act))
    return Mlp(layers)


@dataclass
class ForwardCache:
    net_id: int
    shapes: tuple
    inputs: list  # input to each layer
    preacts: list  # pre-activation output of each layer
    squeeze: bool


def _shapes(net: Mlp) -> tuple:
    return tuple(p.shape for p in net.params())


def forward(net: Mlp, x):
    """Run ``net`` on ``x``; returns ``(output, cache)`` where the cache feeds :func:`backward`."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ConfigurationError(f"input has shape {x.shape}, net expects {net.input_dim} features")
    inputs, preacts = [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        preacts.append(z)
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    cache = ForwardCache(id(net), _shapes(net), inputs, preacts, squeeze)
    return (h[0] if squeeze else h), cache


def backward(net: Mlp, cache: ForwardCache, grad_out):
    """Chain rule through ``net``.

    Returns ``(param_grads, grad_input)``; ``param_grads`` follows the order
    of :meth:`Mlp.params`. Gradients are summed over the batch.
    """
    if cache.net_id != id(net) or cache.shapes != _shapes(net):
        raise InvariantError("cache was produced by a different network")
    g = np.asarray(grad_out, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.preacts[-1].shape:
        raise InvariantError(f"grad_out shape {g.shape} does not match output {cache.preacts[-1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (cache.preacts[i] > 0)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return grads, (g[0] if cache.squeeze else g)


@dataclass
class OptimizerState:
    velocity: list
    momentum: float = 0.9
    lr: float = 0.005

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.lr <= 0:
            raise ConfigurationError("base learning rate must be positive")


def init_optimizer(params, momentum=0.9, lr=0.005) -> OptimizerState:
    return OptimizerState([np.zeros_like(p) for p in params], momentum, lr)


def sgd_step(params, grads, state: OptimizerState, lr=None):
    """Heavy-ball update ``v <- m v + g; p <- p - lr v``, applied in place."""
    lr = state.lr if lr is None else lr
    if len(params) != len(grads) or len(params) != len(state.velocity):
        raise ConfigurationError("params, grads and velocity buffers differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient")
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ConfigurationError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
        v *= state.momentum
        v += g
        p -= lr * v
    return params


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    if total_steps < 1:
        raise ConfigurationError("total_steps must be >= 1")
    if step < 0 or step > total_steps:
        raise ConfigurationError(f"step {step} outside [0, {total_steps}]")
    if step == total_steps:
        return 0.0
    return lr0 * (1.0 + np.cos(np.pi * step / total_steps)) / 2.0


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DegenerateInputError("softmax input must be finite")
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def l2_normalize(v, axis=-1):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateInputError("cannot normalize a zero vector")
    return v / norm


def l2_normalize_backward(v, grad_unit, axis=-1):
    """Gradient w.r.t. ``v`` given the gradient w.r.t. ``v / |v|``."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    u = v / norm
    return (grad_unit - u * np.sum(grad_unit * u, axis=axis, keepdims=True)) / norm


def cross_entropy(target, pred, eps=LOG_EPS):
    """``-sum target * log(pred)`` along the last axis, with ``pred`` clamped at ``eps``."""
    target = np.asarray(target, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if target.shape != pred.shape:
        raise ConfigurationError(f"shape mismatch {target.shape} vs {pred.shape}")
    return -np.sum(target * np.log(np.maximum(pred, eps)), axis=-1)


def is_prob_vector(p, atol=1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= 0) and np.allclose(p.sum(axis=-1), 1.0, rtol=0, atol=atol))


def onehot(index, n: int):
    index = np.asarray(index, dtype=int)
    out = np.zeros(index.shape + (n,))
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out


def entropy(p, axis=-1):
    """Shannon entropy in nats with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    logs = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logs, axis=axis)
