"""Reverse-mode autodiff over dense float64 arrays.

A ``Tape`` records every primitive produced while it is active; ``backward``
replays the records in exact reverse order. Tapes are disposable: one forward
pass builds one tape, and several losses living on the same tape can each be
differentiated with separate ``backward`` calls (gradients are cleared in
between). A module-level counter tracks backward passes so callers can assert
O(1)-vs-O(K) backward budgets.
"""

from __future__ import annotations

import numpy as np

from deskrl.errors import ContractViolation, DegenerateInputError

_ACTIVE_TAPE = None
_BACKWARD_CALLS = 0


def backward_calls() -> int:
    return _BACKWARD_CALLS


def reset_backward_calls() -> None:
    global _BACKWARD_CALLS
    _BACKWARD_CALLS = 0


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Dense row-major float64 array plus an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_inputs")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward = None
        self._inputs = ()

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are wrapped on the fly.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitives; backward walks it strictly in reverse."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractViolation("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def clear_grads(self) -> None:
        for node in self.nodes:
            node.grad = None
            for inp in node._inputs:
                inp.grad = None


def _record(out: Tensor, inputs, backward_fn) -> Tensor:
    """Attach the backward closure and append to the active tape."""
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._backward = backward_fn
        out._inputs = tuple(inputs)
        _ACTIVE_TAPE.nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(x) into ``x.grad`` for every tensor on the tape.

    ``loss`` must be scalar and must have been recorded on ``tape``. Gradients
    from any previous backward over the same tape are cleared first, so
    parameter tensors hold exactly this loss's gradient afterwards.
    """
    global _BACKWARD_CALLS
    if loss.data.size != 1:
        raise ContractViolation(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._backward is None and loss not in tape.nodes:
        raise ContractViolation("loss was not recorded on this tape")
    _BACKWARD_CALLS += 1
    tape.clear_grads()
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is None or node._backward is None:
            continue
        node._backward(node.grad)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


# --- primitives ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bwd(g):
        _accum(a, g)
        _accum(b, g)

    return _record(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)

    def bwd(g):
        _accum(a, g)
        _accum(b, -g)

    return _record(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def bwd(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _record(out, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data)

    def bwd(g):
        _accum(a, g / b.data)
        _accum(b, -g * a.data / (b.data * b.data))

    return _record(out, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data)

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _record(out, (a, b), bwd)


def pow_const(a: Tensor, p: float) -> Tensor:
    out = Tensor(a.data**p)

    def bwd(g):
        _accum(a, g * p * a.data ** (p - 1))

    return _record(out, (a,), bwd)


def square(a: Tensor) -> Tensor:
    return pow_const(a, 2.0)


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))

    def bwd(g):
        _accum(a, g * out.data)

    return _record(out, (a,), bwd)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))

    def bwd(g):
        _accum(a, g / a.data)

    return _record(out, (a,), bwd)


def sqrt(a: Tensor) -> Tensor:
    out = Tensor(np.sqrt(a.data))

    def bwd(g):
        _accum(a, g * 0.5 / out.data)

    return _record(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))

    def bwd(g):
        _accum(a, g * (1.0 - out.data * out.data))

    return _record(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def bwd(g):
        _accum(a, g * (a.data > 0.0))

    return _record(out, (a,), bwd)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * (np.exp(np.minimum(a.data, 0.0)) - 1.0)
    out = Tensor(np.where(a.data > 0.0, a.data, neg))

    def bwd(g):
        _accum(a, g * np.where(a.data > 0.0, 1.0, neg + alpha))

    return _record(out, (a,), bwd)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi))

    def bwd(g):
        _accum(a, g * ((a.data >= lo) & (a.data <= hi)))

    return _record(out, (a,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))

    def bwd(g):
        _accum(a, g * take_a)
        _accum(b, g * ~take_a)

    return _record(out, (a, b), bwd)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _record(out, (a,), bwd)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    n = a.data.size / out.data.size

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape) / n)

    return _record(out, (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _record(out, (a,), bwd)


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a flat tensor; gradient scatters back into place."""
    out = Tensor(a.data[start:stop])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            _accum(a, full)

    return _record(out, (a,), bwd)


def gather_last(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick one entry along the last axis per leading position.

    ``index`` has the leading shape of ``a`` and integer entries in
    [0, a.shape[-1]).
    """
    idx = np.asarray(index)
    out = Tensor(np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
            _accum(a, full)

    return _record(out, (a,), bwd)


def gather_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Row selection ``a[index]``; duplicate indices accumulate on backward."""
    idx = np.asarray(index)
    out = Tensor(a.data[idx])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accum(a, full)

    return _record(out, (a,), bwd)


def gather_rows_col(a: Tensor, col: int) -> Tensor:
    """One column of a 2-D tensor as a (N,) vector."""
    out = Tensor(a.data[:, col])

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[:, col] = g
            _accum(a, full)

    return _record(out, (a,), bwd)


def concat_rows(parts: list[Tensor]) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    sizes = [len(p.data) for p in parts]

    def bwd(g):
        off = 0
        for p, n in zip(parts, sizes):
            _accum(p, g[off : off + n])
            off += n

    return _record(out, tuple(parts), bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)

    def bwd(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        _accum(a, p * (g - dot))

    return _record(out, (a,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data.shape[-1]
    if d < 2:
        raise DegenerateInputError(f"layer_norm needs last-axis size >= 2, got {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)

    def bwd(g):
        _accum(gain, g * xhat)
        _accum(bias, g)
        if x.requires_grad:
            gx = g * gain.data
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            _accum(x, term * inv)

    return _record(out, (x, gain, bias), bwd)


def concat_last(parts: list[Tensor]) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1))
    widths = [p.data.shape[-1] for p in parts]

    def bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            _accum(p, g[..., off : off + w])
            off += w

    return _record(out, tuple(parts), bwd)


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data.copy())


ACTIVATIONS = {
    "tanh": tanh,
    "relu": relu,
    "elu": elu,
    "linear": lambda t: t,
}
