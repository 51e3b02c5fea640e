"""Per-view multilayer perceptrons with hand-written backprop and Adam.

Layer ``i`` computes ``h_i = act(drop(W_i h_{i-1} + b_i))``. Dropout is
inverted (survivors scaled by ``1/(1-p)``), acts on the pre-activation, and
is skipped on the output layer. The activation is also applied at the
output unless ``linear_output`` is set.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, DataError

ACTIVATIONS = ("sigmoid", "tanh", "linear")


def _activate(name, a):
    if name == "sigmoid":
        return expit(a)
    if name == "tanh":
        return np.tanh(a)
    return a


def _activation_grad(name, h):
    # derivative expressed through the activation output
    if name == "sigmoid":
        return h * (1.0 - h)
    if name == "tanh":
        return 1.0 - h * h
    return np.ones_like(h)


@dataclass
class ViewNetwork:
    weights: list
    biases: list
    activation: str = "sigmoid"
    dropout: float = 0.0
    linear_output: bool = False

    @property
    def widths(self):
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    @property
    def n_layers(self):
        return len(self.weights)

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self):
        return ViewNetwork([W.copy() for W in self.weights],
                           [b.copy() for b in self.biases],
                           self.activation, self.dropout, self.linear_output)


def net_init(widths, activation="sigmoid", dropout=0.0, seed=0, linear_output=False):
    """Glorot-uniform weights and zero biases for ``widths = [d_in, ..., m]``."""
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ConfigError("a network needs an input and an output width", "widths")
    if min(widths) < 1:
        raise ConfigError(f"widths must be positive, got {widths}", "widths")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}", "activation")
    if not 0.0 <= dropout < 1.0:
        raise ConfigError(f"dropout must lie in [0, 1), got {dropout}", "dropout")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ViewNetwork(weights, biases, activation, float(dropout), bool(linear_output))


def forward(net, X, train=False, rng=None):
    """Run ``net`` on ``X`` (d_in x n).

    Returns ``(out, cache)``; eval mode (``train=False``) ignores ``rng`` and
    applies no dropout.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != net.widths[0]:
        raise DataError(f"input of shape {X.shape} does not match network input "
                        f"width {net.widths[0]}")
    use_dropout = train and net.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout needs an rng")
    inputs, outputs, masks = [], [], []
    h = X
    last = net.n_layers - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        a = W @ h + b[:, None]
        mask = None
        if use_dropout and i < last:
            mask = (rng.random(a.shape) >= net.dropout) / (1.0 - net.dropout)
            a = a * mask
        masks.append(mask)
        act = "linear" if (i == last and net.linear_output) else net.activation
        h = _activate(act, a)
        outputs.append(h)
    return h, {"inputs": inputs, "outputs": outputs, "masks": masks}


def backward(net, cache, dout):
    """Gradients of a scalar loss given ``dL/d(out)``.

    Returns ``(grads, dX)`` where ``grads`` follows the order of
    :meth:`ViewNetwork.params` (``dW_1, db_1, dW_2, ...``).
    """
    dout = np.asarray(dout, dtype=np.float64)
    outputs = cache["outputs"]
    if len(outputs) != net.n_layers or dout.shape != outputs[-1].shape:
        raise DataError("cache does not match the network or output gradient")
    grads = [None] * (2 * net.n_layers)
    last = net.n_layers - 1
    g = dout
    for i in range(last, -1, -1):
        act = "linear" if (i == last and net.linear_output) else net.activation
        g = g * _activation_grad(act, outputs[i])
        if cache["masks"][i] is not None:
            g = g * cache["masks"][i]
        grads[2 * i] = g @ cache["inputs"][i].T
        grads[2 * i + 1] = g.sum(axis=1)
        g = net.weights[i].T @ g
    return grads, g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise DataError("parameter and gradient lists differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
