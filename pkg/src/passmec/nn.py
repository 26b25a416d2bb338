"""Dense networks with hand-written backprop, and Adam."""
from __future__ import annotations

from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "relu", "linear")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


class DenseNet:
    """Fully connected net mapping (batch, sizes[0]) -> (batch, sizes[-1]).

    ``forward`` caches the activations of its last call; ``backward`` consumes
    them, so call them in pairs.
    """

    def __init__(self, sizes: Sequence[int], hidden: str = "tanh", output: str = "linear",
                 rng: np.random.Generator | None = None, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if hidden not in ACTIVATIONS or output not in ACTIVATIONS:
            raise ValueError(f"activations must be in {ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = [int(s) for s in sizes]
        self.hidden, self.output = hidden, output
        self.W, self.b = [], []
        n_layers = len(self.sizes) - 1
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = np.sqrt(2.0) if hidden == "relu" else 1.0
            scale = gain / np.sqrt(n_in)
            if i == n_layers - 1:
                scale *= out_scale
            self.W.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.b.append(np.zeros(n_out))
        self._cache = None

    @property
    def params(self) -> list:
        return [p for pair in zip(self.W, self.b) for p in pair]

    def set_params(self, params) -> None:
        params = list(params)
        for i in range(len(self.W)):
            self.W[i] = np.array(params[2 * i], dtype=float)
            self.b[i] = np.array(params[2 * i + 1], dtype=float)

    def activation(self, layer: int) -> str:
        return self.output if layer == len(self.W) - 1 else self.hidden

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {a.shape[1]} != {self.sizes[0]}")
        inputs, zs, outs = [], [], []
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            inputs.append(a)
            z = a @ W + b
            a = _act(self.activation(i), z)
            zs.append(z)
            outs.append(a)
        self._cache = (inputs, zs, outs, single)
        return a[0] if single else a

    def backward(self, grad_out) -> list:
        """Gradients of a scalar loss w.r.t. params, given dLoss/dOutput."""
        if self._cache is None:
            raise RuntimeError("backward() called without a cached forward()")
        inputs, zs, outs, single = self._cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        grads = [None] * (2 * len(self.W))
        for i in reversed(range(len(self.W))):
            g = g * _act_grad(self.activation(i), zs[i], outs[i])
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i:
                g = g @ self.W[i].T
        return grads


class Adam:
    def __init__(self, params: list, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list, grads: list) -> None:
        """In-place update of ``params``."""
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = [np.array(x, dtype=float) for x in state["m"]]
        self.v = [np.array(x, dtype=float) for x in state["v"]]


def clip_by_global_norm(grads: list, max_norm: float):
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        s = max_norm / (norm + 1e-12)
        grads = [g * s for g in grads]
    return grads, norm
