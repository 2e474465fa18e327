"""Small classifiers with hand-written backprop.

Parameters live in one flat vector. Layout (row-major blocks, in order):

* logistic: ``W (d, C)``, ``b (C,)``
* mlp:      ``W1 (d, h)``, ``b1 (h,)``, ``W2 (h, C)``, ``b2 (C,)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import RngStream


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic"
    input_dim: int = 2
    num_classes: int = 2
    hidden_dim: int = 0
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "mlp" and self.hidden_dim <= 0:
            raise ValueError("mlp needs hidden_dim > 0")
        if self.kind == "logistic" and self.hidden_dim != 0:
            raise ValueError("logistic model takes hidden_dim = 0")

    @property
    def shapes(self) -> list:
        d, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == "logistic":
            return [(d, c), (c,)]
        return [(d, h), (h,), (h, c), (c,)]

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)

    def unpack(self, params) -> list:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.num_params,):
            raise DimensionError(f"expected {self.num_params} parameters, got {params.shape}")
        out, pos = [], 0
        for s in self.shapes:
            n = int(np.prod(s))
            out.append(params[pos:pos + n].reshape(s))
            pos += n
        return out


@dataclass
class LossGrad:
    loss: float
    grad: np.ndarray


def init_params(spec: ModelSpec, rng: RngStream) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    gen = rng.generator()
    blocks = []
    for s in spec.shapes:
        if len(s) == 2:
            bound = 1.0 / np.sqrt(s[0])
            blocks.append(gen.uniform(-bound, bound, size=s).ravel())
        else:
            blocks.append(np.zeros(s))
    return np.concatenate(blocks)


def _canonical(X, y):
    # Sort rows so the reduction order, and hence the result, ignores batch order.
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    return X[order], y[order]


def _check_batch(spec, X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionError(f"batch features must be (n, {spec.input_dim}), got {X.shape}")
    if y.shape != (X.shape[0],):
        raise DimensionError("labels must match the number of samples")
    return X, y


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _forward(spec, blocks, X):
    if spec.kind == "logistic":
        W, b = blocks
        return X @ W + b, None
    W1, b1, W2, b2 = blocks
    pre = X @ W1 + b1
    hid = np.tanh(pre) if spec.activation == "tanh" else np.maximum(pre, 0.0)
    return hid @ W2 + b2, (pre, hid)


def logits(spec: ModelSpec, params, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return _forward(spec, spec.unpack(params), X)[0]


def loss_and_grad(spec: ModelSpec, params, X, y) -> LossGrad:
    """Mean cross-entropy over the batch ``(X, y)`` and its exact gradient."""
    X, y = _check_batch(spec, X, y)
    if len(y) == 0:
        raise ValueError("empty batch")
    X, y = _canonical(X, y)
    blocks = spec.unpack(params)
    n = len(y)
    z, cache = _forward(spec, blocks, X)
    logp = _log_softmax(z)
    loss = -logp[np.arange(n), y].mean()

    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n

    if spec.kind == "logistic":
        grads = [X.T @ dz, dz.sum(axis=0)]
    else:
        W1, b1, W2, b2 = blocks
        pre, hid = cache
        dhid = dz @ W2.T
        if spec.activation == "tanh":
            dpre = dhid * (1.0 - hid * hid)
        else:
            dpre = dhid * (pre > 0)
        grads = [X.T @ dpre, dpre.sum(axis=0), hid.T @ dz, dz.sum(axis=0)]
    grad = np.concatenate([g.ravel() for g in grads])
    return LossGrad(float(loss), grad)


def evaluate(spec: ModelSpec, params, ds) -> tuple:
    """Return ``(accuracy, mean cross-entropy)`` on a dataset."""
    if len(ds) == 0:
        return 0.0, 0.0
    z = logits(spec, params, ds.X)
    pred = np.argmax(z, axis=1)  # first maximum wins ties
    acc = float(np.mean(pred == ds.y))
    loss = float(-_log_softmax(z)[np.arange(len(ds)), ds.y].mean())
    return acc, loss
