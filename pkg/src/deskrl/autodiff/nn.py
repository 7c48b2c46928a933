"""Parameter registry, initializers, and the plain MLP building block."""

from __future__ import annotations

import numpy as np

from deskrl.autodiff import engine
from deskrl.autodiff.engine import Tensor
from deskrl.errors import ConfigError


class Params:
    """Named trainable tensors with a deterministic flat layout.

    Registration order fixes the layout: a list of ``(name, shape, offset)``
    entries into one contiguous float64 vector. ``flat``/``set_flat`` round-trip
    exactly (pure concatenation, no arithmetic).
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._layout: list[tuple[str, tuple, int]] = []
        self._size = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._tensors[name] = t
        self._layout.append((name, t.data.shape, self._size))
        self._size += t.data.size
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    @property
    def size(self) -> int:
        return self._size

    @property
    def layout(self):
        return tuple(self._layout)

    def names(self):
        return [name for name, _, _ in self._layout]

    def flat(self) -> np.ndarray:
        out = np.empty(self._size, dtype=np.float64)
        for name, _, off in self._layout:
            d = self._tensors[name].data
            out[off : off + d.size] = d.ravel()
        return out

    def set_flat(self, v: np.ndarray) -> None:
        if v.shape != (self._size,):
            raise ConfigError(f"flat vector has size {v.shape}, expected ({self._size},)")
        for name, shape, off in self._layout:
            t = self._tensors[name]
            t.data = v[off : off + t.data.size].reshape(shape).copy()

    def grad_flat(self) -> np.ndarray:
        """Gradient in layout order; parameters the loss never touched get zeros."""
        out = np.zeros(self._size, dtype=np.float64)
        for name, _, off in self._layout:
            t = self._tensors[name]
            if t.grad is not None:
                out[off : off + t.data.size] = t.grad.ravel()
        return out

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None


def orthogonal_init(rng: np.random.Generator, shape, gain: float = 1.0) -> np.ndarray:
    """Orthogonal initialization (rl-games style default for policy nets)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Linear:
    def __init__(self, params: Params, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, gain: float = np.sqrt(2.0), bias: bool = True):
        self.name = name
        self.w = params.add(f"{name}.w", orthogonal_init(rng, (in_dim, out_dim), gain))
        self.b = params.add(f"{name}.b", np.zeros(out_dim)) if bias else None
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.in_dim:
            raise ConfigError(
                f"layer {self.name}: input width {x.data.shape[-1]} != expected {self.in_dim}"
            )
        out = engine.matmul(x, self.w)
        if self.b is not None:
            out = engine.add(out, self.b)
        return out


class MLP:
    """Feed-forward stack: hidden layers with one activation, linear output."""

    def __init__(self, params: Params, name: str, in_dim: int, hidden, out_dim: int,
                 activation: str, rng: np.random.Generator, out_gain: float = 1.0):
        if activation not in engine.ACTIVATIONS:
            raise ConfigError(f"unknown activation: {activation}")
        self.activation = engine.ACTIVATIONS[activation]
        self.layers: list[Linear] = []
        last = in_dim
        for i, h in enumerate(hidden):
            self.layers.append(Linear(params, f"{name}.h{i}", last, int(h), rng))
            last = int(h)
        self.out = Linear(params, f"{name}.out", last, out_dim, rng, gain=out_gain)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = self.activation(layer(x))
        return self.out(x)


class LayerNormBlock:
    """Residual block ``x + f(LN(x))`` used by the factorized Q network."""

    def __init__(self, params: Params, name: str, dim: int, rng: np.random.Generator,
                 residual: bool = True):
        self.gain = params.add(f"{name}.ln.g", np.ones(dim))
        self.bias = params.add(f"{name}.ln.b", np.zeros(dim))
        self.lin = Linear(params, f"{name}.lin", dim, dim, rng)
        self.residual = residual

    def __call__(self, x: Tensor) -> Tensor:
        h = engine.relu(self.lin(engine.layer_norm(x, self.gain, self.bias)))
        return engine.add(x, h) if self.residual else h
