"""Shared-MLP layers and the Adam optimizer.

A "shared" MLP applies the same weights to every row of its input, so the
output at row i depends only on the input at row i. All point-wise and
per-neighbor projections in the network are built from these layers.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .errors import NumericError, ShapeError
from .tensor import Tensor

ACTIVATIONS = ("identity", "leaky_relu")


class MlpLayer:
    """One fully connected layer applied row-wise: activation(x @ W + b)."""

    def __init__(self, d_in: int, d_out: int, activation: str = "leaky_relu",
                 negative_slope: float = 0.2, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}, expected one of {ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng()
        # He-uniform, scaled by fan-in; bias starts at zero
        limit = math.sqrt(6.0 / d_in)
        w = rng.uniform(-limit, limit, size=(d_in, d_out))
        self.weights = Tensor(w.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)
        self.activation = activation
        self.negative_slope = negative_slope
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[-1] != self.d_in:
            raise ShapeError(
                f"layer expects trailing dimension {self.d_in}, got input shape {x.shape}")
        y = T.matmul(x, self.weights) + self.bias
        if self.activation == "leaky_relu":
            y = T.leaky_relu(y, self.negative_slope)
        return y

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weights, f"{prefix}.bias": self.bias}


class MlpStack:
    """A small sequence of shared-MLP layers."""

    def __init__(self, widths: list[int], activation: str = "leaky_relu",
                 final_activation: str = "identity", negative_slope: float = 0.2,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if len(widths) < 2:
            raise ValueError("MlpStack needs at least input and output widths")
        self.layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            act = final_activation if i == len(widths) - 2 else activation
            self.layers.append(MlpLayer(a, b, act, negative_slope, rng, dtype))

    def __call__(self, x) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers):
            params.update(layer.parameters(f"{prefix}.{i}"))
        return params


class Adam:
    """Adam with a multiplicative per-epoch learning-rate decay.

    ``end_epoch()`` must be called once per epoch boundary; the learning rate
    is then multiplied by ``lr_decay`` (0.95 = the 5%-per-epoch schedule).
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 lr_decay: float = 0.95):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.lr_decay = lr_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bias1
            v_hat = v / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def end_epoch(self):
        self.lr *= self.lr_decay
