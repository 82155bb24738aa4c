"""Feedforward Q-network in plain numpy.

Layout ``[3, 128, 32, 3]``: sigmoid hidden layers, identity output, one
Q-value per action in canonical action order. Weight matrices are stored as
``(fan_out, fan_in)``; batches are rows.

Checkpoint format (all integers uint32 little-endian, all reals float64
little-endian, arrays row-major)::

    magic            8 bytes  b"QNETCKP1"
    n_sizes          uint32
    layer sizes      n_sizes x uint32
    has_normalizer   uint32 (0 or 1)
    for each layer:  weights (fan_out * fan_in), biases (fan_out)
    if normalizer:   shift (n_inputs), scale (n_inputs)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_LAYER_SIZES = (3, 128, 32, 3)
MAGIC = b"QNETCKP1"

Gradient = list  # [(dW, db), ...] aligned with QNetwork layers


class DivergenceError(FloatingPointError):
    """Raised when an update would produce non-finite parameters."""


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Affine map ``(x - shift) / scale`` applied to ``[net demand, price, soc]``."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        shift = np.array(self.shift, dtype=float)
        scale = np.array(self.scale, dtype=float)
        if shift.shape != scale.shape or shift.ndim != 1:
            raise ValueError("shift and scale must be vectors of equal length")
        if np.any(~np.isfinite(shift)) or np.any(~np.isfinite(scale)) or np.any(scale <= 0):
            raise ValueError(f"normalizer scale must be finite and > 0, got {scale}")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls, n: int = 3) -> "Normalizer":
        return cls(np.zeros(n), np.ones(n))

    @classmethod
    def from_scenarios(cls, scenarios, capacity_kwh: float) -> "Normalizer":
        """Min/max of net demand and price over the scenarios; ``[0, E]`` for soc."""
        net = np.concatenate([s.net_demand_kw for s in scenarios])
        price = np.concatenate([s.price_per_kwh for s in scenarios])
        lo = np.array([net.min(), price.min(), 0.0])
        hi = np.array([net.max(), price.max(), capacity_kwh])
        span = hi - lo
        span[span <= 0] = 1.0
        return cls(lo, span)

    def __call__(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Normalizer):
            return NotImplemented
        return np.array_equal(self.shift, other.shift) and np.array_equal(
            self.scale, other.scale
        )


class QNetwork:
    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias vector per weight matrix")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i - 1} "
                    f"produces {self.weights[i - 1].shape[0]}"
                )
        self._check_finite()

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _check_finite(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DivergenceError(f"non-finite parameters in layer {i}")

    def _activations(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            acts.append(z if i == last else sigmoid(z))
        return acts

    def forward(self, state_normalized) -> np.ndarray:
        """Q-values for one state (shape ``(n_in,)``) or a batch (``(B, n_in)``)."""
        x = np.asarray(state_normalized, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"non-finite network input {x}")
        return self._activations(x)[-1]

    __call__ = forward

    def batch_gradient(self, states, actions, targets) -> tuple[Gradient, float]:
        """Gradient of the mean of ``0.5 * (target - Q(s, a))**2`` over a batch.

        Returns ``(gradient, mean_loss)``. Only the selected output unit of each
        sample carries error back through the head.
        """
        x = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_1d(np.asarray(actions, dtype=np.int64))
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        batch = x.shape[0]
        acts = self._activations(x)
        rows = np.arange(batch)
        err = acts[-1][rows, actions] - targets
        delta = np.zeros_like(acts[-1])
        delta[rows, actions] = err / batch
        grads: Gradient = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
            if i:
                a = acts[i]
                delta = (delta @ self.weights[i]) * a * (1.0 - a)
        return grads, float(0.5 * np.mean(err**2))

    def backward(self, state, action_index: int, target: float) -> Gradient:
        """Gradient of ``0.5 * (target - Q(s, a))**2`` for a single sample."""
        if action_index not in range(self.layer_sizes[-1]):
            raise ValueError(f"action index {action_index} out of range")
        return self.batch_gradient([state], [action_index], [target])[0]

    def sgd_step(self, grads: Gradient, learning_rate: float) -> "QNetwork":
        """``theta <- theta - lr * grad`` in place; returns self.

        Parameters are left untouched if the update would make any non-finite.
        """
        if not learning_rate >= 0:
            raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
        new_w = [w - learning_rate * g for w, (g, _) in zip(self.weights, grads)]
        new_b = [b - learning_rate * g for b, (_, g) in zip(self.biases, grads)]
        for i, (w, b) in enumerate(zip(new_w, new_b)):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DivergenceError(
                    f"SGD step (lr={learning_rate}) produced non-finite parameters in layer {i}"
                )
        self.weights, self.biases = new_w, new_b
        return self

    def get_flat(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)]
        )

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        pos = 0
        for i, w in enumerate(self.weights):
            n = w.size
            self.weights[i] = theta[pos : pos + n].reshape(w.shape).copy()
            pos += n
            m = self.biases[i].size
            self.biases[i] = theta[pos : pos + m].copy()
            pos += m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QNetwork):
            return NotImplemented
        return self.layer_sizes == other.layer_sizes and np.array_equal(
            self.get_flat(), other.get_flat()
        )


def flatten_gradient(grads: Gradient) -> np.ndarray:
    return np.concatenate([np.concatenate([dw.ravel(), db]) for dw, db in grads])


def init_random(seed: int, layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES) -> QNetwork:
    """Glorot-uniform weights in ``+-sqrt(6 / (fan_in + fan_out))``, zero biases."""
    if len(layer_sizes) < 2 or any(int(s) < 1 for s in layer_sizes):
        raise ValueError(f"invalid layer sizes {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return QNetwork(weights, biases)


def numerical_gradient(
    net: QNetwork, state, action_index: int, target: float, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of ``0.5 * (target - Q(s, a))**2`` over all parameters."""
    theta = net.get_flat()
    probe = net.copy()
    x = np.asarray(state, dtype=float)
    grad = np.empty_like(theta)

    def loss(th: np.ndarray) -> float:
        probe.set_flat(th)
        return 0.5 * (target - probe.forward(x)[action_index]) ** 2

    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + step
        up = loss(theta)
        theta[k] = orig - step
        down = loss(theta)
        theta[k] = orig
        grad[k] = (up - down) / (2.0 * step)
    return grad


def save_checkpoint(path, net: QNetwork, normalizer: Normalizer | None = None) -> None:
    sizes = net.layer_sizes
    parts = [MAGIC, struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)]
    parts.append(struct.pack("<I", 0 if normalizer is None else 1))
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if normalizer is not None:
        if normalizer.shift.size != sizes[0]:
            raise ValueError("normalizer width does not match the network input")
        parts.append(normalizer.shift.astype("<f8").tobytes())
        parts.append(normalizer.scale.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[QNetwork, Normalizer | None]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a Q-network checkpoint")
    pos = 8

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ValueError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (n_sizes,) = take("<I")
    sizes = take(f"<{n_sizes}I")
    (has_norm,) = take("<I")

    def array(n: int) -> np.ndarray:
        nonlocal pos
        if pos + 8 * n > len(data):
            raise ValueError(f"{path}: truncated checkpoint")
        out = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(float)
        pos += 8 * n
        return out

    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(array(fan_in * fan_out).reshape(fan_out, fan_in))
        biases.append(array(fan_out))
    normalizer = None
    if has_norm:
        normalizer = Normalizer(array(sizes[0]), array(sizes[0]))
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes in checkpoint")
    return QNetwork(weights, biases), normalizer
