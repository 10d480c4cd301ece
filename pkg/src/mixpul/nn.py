"""Dense ReLU network with a sigmoid scalar head, trained by manual backprop.

Parameters are stored PyTorch-style: ``weights[k]`` has shape
``(fan_out, fan_in)`` and ``biases[k]`` has shape ``(fan_out,)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    """Raised when array shapes do not line up with the network."""


class DivergenceError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


def sigmoid(z):
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardCache:
    inputs: np.ndarray
    activations: list  # post-ReLU hidden activations, one per hidden layer
    logits: np.ndarray
    scores: np.ndarray


class Mlp:
    """Fully connected network ``d -> h1 -> ... -> 1`` with ReLU hidden units."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(f"layer {k}: fan_in {w.shape[1]} != previous fan_out {self.weights[k - 1].shape[0]}")
        if self.weights[-1].shape[0] != 1:
            raise ShapeError("output layer must have a single unit")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "Mlp":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for ``sizes = [d, h1, ..., 1]``."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, sizes) -> "Mlp":
        return cls(
            [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
            [np.zeros(o) for o in sizes[1:]],
        )

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (w0, b0, w1, b1, ...); views, not copies."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward_cached(self, inputs) -> ForwardCache:
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights[0].shape[1]:
            raise ShapeError(f"expected inputs of shape (B, {self.weights[0].shape[1]}), got {x.shape}")
        h = x
        acts = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w.T + b, 0.0)
            acts.append(h)
        logits = (h @ self.weights[-1].T + self.biases[-1])[:, 0]
        return ForwardCache(x, acts, logits, sigmoid(logits))

    def logits(self, inputs) -> np.ndarray:
        return self.forward_cached(inputs).logits

    def forward(self, inputs) -> np.ndarray:
        return self.forward_cached(inputs).scores

    __call__ = forward

    def backward_cached(self, cache: ForwardCache, grad_logits) -> list[np.ndarray]:
        """Parameter gradients given dLoss/dlogits for the cached batch."""
        g = np.asarray(grad_logits, dtype=np.float64)
        if g.shape != cache.logits.shape:
            raise ShapeError(f"upstream gradient {g.shape} does not match batch {cache.logits.shape}")
        delta = g[:, None]
        grads = []
        layer_inputs = [cache.inputs] + cache.activations
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = layer_inputs[k]
            grads.append(delta.sum(axis=0))
            grads.append(delta.T @ h_in)
            if k:
                delta = (delta @ self.weights[k]) * (h_in > 0)
        grads.reverse()
        return grads

    def backward_scores(self, cache: ForwardCache, grad_scores) -> list[np.ndarray]:
        g = np.asarray(grad_scores, dtype=np.float64)
        if g.shape != cache.scores.shape:
            raise ShapeError(f"upstream gradient {g.shape} does not match batch {cache.scores.shape}")
        return self.backward_cached(cache, g * cache.scores * (1.0 - cache.scores))


def forward(model: Mlp, inputs) -> np.ndarray:
    return model.forward(inputs)


def backward(model: Mlp, inputs, grad_scores) -> list[np.ndarray]:
    """Gradients of ``sum(grad_scores * f(inputs))`` w.r.t. ``model.params()``."""
    inputs = np.asarray(inputs, dtype=np.float64)
    grad_scores = np.asarray(grad_scores, dtype=np.float64)
    if inputs.ndim != 2 or grad_scores.shape != (inputs.shape[0],):
        raise ShapeError(f"batch size mismatch: inputs {inputs.shape}, gradient {grad_scores.shape}")
    return model.backward_scores(model.forward_cached(inputs), grad_scores)


def add_grads(a, b):
    return [x + y for x, y in zip(a, b)]


def scale_grads(grads, c):
    return [c * g for g in grads]


@dataclass
class Sgd:
    """SGD with (Nesterov) momentum and coupled L2 weight decay.

    Per step, with ``g`` the raw gradient:  g += wd * theta;  v = mu * v + g;
    theta -= lr * (g + mu * v)  (Nesterov) or  theta -= lr * v  (classical).
    """

    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 1e-4
    nesterov: bool = True
    velocity: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be nonnegative")

    def step(self, model: Mlp, grads) -> None:
        params = model.params()
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ShapeError("gradient shapes do not match parameter shapes")
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise DivergenceError("non-finite gradient")
        if not self.velocity:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            d = g + self.weight_decay * p if self.weight_decay else g
            if self.momentum:
                v *= self.momentum
                v += d
                d = d + self.momentum * v if self.nesterov else v
            p -= self.lr * d


def sgd_step(model: Mlp, grads, state: Sgd) -> tuple[Mlp, Sgd]:
    state.step(model, grads)
    return model, state


class Ema:
    """Exponential moving average of a model's parameters (the teacher)."""

    def __init__(self, model: Mlp, decay: float = 0.999):
        if not 0 <= decay < 1:
            raise ValueError("EMA decay must lie in [0, 1)")
        self.decay = decay
        self.shadow = model.copy()

    def update(self, model: Mlp) -> None:
        if model.sizes != self.shadow.sizes:
            raise ShapeError(f"EMA tracks {self.shadow.sizes}, got {model.sizes}")
        d = self.decay
        for s, p in zip(self.shadow.params(), model.params()):
            s *= d
            s += (1.0 - d) * p

    def forward(self, inputs) -> np.ndarray:
        return self.shadow.forward(inputs)

    __call__ = forward


def ema_update(ema: Ema, model: Mlp) -> Ema:
    ema.update(model)
    return ema


# Checkpoint layout (all little-endian):
#   b"MXPL"  u32 version  u32 n_layers  u32 sizes[n_layers + 1]
#   then per layer: f64 weight[fan_out * fan_in] (row-major), f64 bias[fan_out]
CHECKPOINT_MAGIC = b"MXPL"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: Mlp, path) -> None:
    sizes = model.sizes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack(f"<II{len(sizes)}I", CHECKPOINT_VERSION, len(model.weights), *sizes))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> Mlp:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, n_layers = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    sizes = struct.unpack_from(f"<{n_layers + 1}I", raw, 12)
    offset = 12 + 4 * (n_layers + 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * w.size
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * b.size
        weights.append(w.reshape(fan_out, fan_in).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return Mlp(weights, biases)
