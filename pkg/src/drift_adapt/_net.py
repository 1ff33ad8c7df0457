"""Dense feed-forward networks on numpy arrays, with manual backprop.

Networks here are plain lists of weight matrices ([in, out] layout) and
bias vectors with a named activation per layer.  Forward passes can
record a cache that the backward pass consumes; gradients flow to the
parameters and to the input, which lets callers chain networks (cycle
consistency, adversarial terms) without an autograd engine.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError

_ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _act_grad_from_out(name: str, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation expressed through its output value.

    relu uses a > 0, so the derivative at exactly zero is taken as 0.
    """
    if name == "relu":
        return (a > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


class DenseNet:
    """Feed-forward stack; ``weights[i]`` maps layer i input to its output."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 activations: list[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise DimensionError("weights, biases, activations must have equal length")
        for name in activations:
            if name not in _ACTIVATIONS:
                raise ConfigError(f"unknown activation {name!r}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = list(activations)

    @classmethod
    def create(cls, dims: list[int], activations: list[str],
               g: np.random.Generator) -> "DenseNet":
        """He-style uniform init: W ~ U(-r, r) with r = sqrt(6 / fan_in)."""
        if len(dims) < 2 or len(activations) != len(dims) - 1:
            raise DimensionError("need len(dims) >= 2 and one activation per layer")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            r = np.sqrt(6.0 / fan_in)
            weights.append(g.uniform(-r, r, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activations)

    @classmethod
    def identity(cls, dim: int) -> "DenseNet":
        return cls([np.eye(dim)], [np.zeros(dim)], ["linear"])

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: np.ndarray, dropout: list[float] | None = None,
                g: np.random.Generator | None = None, want_cache: bool = False):
        """Run the network; optionally apply inverted dropout after hidden layers.

        ``dropout`` gives one keep-rate-complement per layer (the last entry
        must be 0; outputs are never dropped).  Masks scale survivors by
        1/(1-rate) so the expected activation is unchanged.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        if a.shape[1] != self.input_dim:
            raise DimensionError(f"input has {a.shape[1]} columns, expected {self.input_dim}")
        if dropout is not None:
            if len(dropout) != len(self.weights):
                raise DimensionError("need one dropout rate per layer")
            if dropout[-1] != 0.0:
                raise ConfigError("dropout on the output layer is not supported")
            if any(r > 0.0 for r in dropout) and g is None:
                raise ConfigError("dropout requires a generator")
        cache = []
        for i, (w, b, name) in enumerate(zip(self.weights, self.biases, self.activations)):
            z = a @ w + b
            act = _act(name, z)
            mask = None
            if dropout is not None and dropout[i] > 0.0:
                keep = 1.0 - dropout[i]
                mask = (g.random(act.shape) < keep).astype(np.float64) / keep
                out = act * mask
            else:
                out = act
            if want_cache:
                cache.append((a, act, mask))
            a = out
        y = a[0] if squeeze else a
        return (y, cache) if want_cache else y

    def backward(self, cache, d_out: np.ndarray):
        """Backprop ``d_out`` (gradient at the output) through the cache.

        Returns (d_input, weight_grads, bias_grads).
        """
        d_a = np.asarray(d_out, dtype=np.float64)
        if d_a.ndim == 1:
            d_a = d_a[None, :]
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            a_in, act, mask = cache[i]
            if mask is not None:
                d_a = d_a * mask
            d_z = d_a * _act_grad_from_out(self.activations[i], act)
            grads_w[i] = a_in.T @ d_z
            grads_b[i] = d_z.sum(axis=0)
            d_a = d_z @ self.weights[i].T
        return d_a, grads_w, grads_b

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "DenseNet":
        return DenseNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )

    def set_from(self, other: "DenseNet") -> None:
        for mine, theirs in zip(self.params(), other.params()):
            mine[...] = theirs

    def to_dict(self) -> dict:
        return {
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        return cls(
            [np.array(w, dtype=np.float64) for w in d["weights"]],
            [np.array(b, dtype=np.float64) for b in d["biases"]],
            [str(a) for a in d["activations"]],
        )


class Adam:
    """Adam optimizer over a fixed list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
