"""Dense float tensor with reverse-mode automatic differentiation.

A Tensor wraps a contiguous numpy float array (float32 by default, float64
supported for high-precision gradient checking). Operations build an implicit
tape: each result remembers its parents and a closure that routes the output
gradient back to them. Calling ``backward()`` on a scalar result walks the
tape in reverse topological order.

Tensors are treated as immutable values once created; no op mutates its
inputs.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError, StateError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """A dense row-major float array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backprop")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = np.ascontiguousarray(arr, dtype=dtype)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
        else:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backprop = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def check_finite(self, context: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NumericError(f"{context}: non-finite values detected")
        return self

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff ------------------------------------------------------
    def backward(self):
        """Backpropagate from this scalar through the recorded computation."""
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.data.shape}")
        if self._backprop is None:
            raise StateError("backward() called on a tensor with no recorded forward computation")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backprop is not None:
                node._backprop()

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray):
    if not (t.requires_grad or t._parents):
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if t.grad is None:
        t.grad = g.copy() if not g.flags.owndata else g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _result(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    # broadcasting is allowed; this just produces a clear error when shapes
    # are flat-out incompatible
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "add")
    out = _result(a.data + b.data, (a, b))
    if out.requires_grad:
        def backprop():
            _accumulate(a, _unbroadcast(out.grad, a.shape))
            _accumulate(b, _unbroadcast(out.grad, b.shape))
        out._backprop = backprop
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "sub")
    out = _result(a.data - b.data, (a, b))
    if out.requires_grad:
        def backprop():
            _accumulate(a, _unbroadcast(out.grad, a.shape))
            _accumulate(b, _unbroadcast(-out.grad, b.shape))
        out._backprop = backprop
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "mul")
    out = _result(a.data * b.data, (a, b))
    if out.requires_grad:
        def backprop():
            _accumulate(a, _unbroadcast(out.grad * b.data, a.shape))
            _accumulate(b, _unbroadcast(out.grad * a.data, b.shape))
        out._backprop = backprop
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "div")
    out = _result(a.data / b.data, (a, b))
    if out.requires_grad:
        def backprop():
            _accumulate(a, _unbroadcast(out.grad / b.data, a.shape))
            _accumulate(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape))
        out._backprop = backprop
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = _result(-a.data, (a,))
    if out.requires_grad:
        def backprop():
            _accumulate(a, -out.grad)
        out._backprop = backprop
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.log(a.data), (a,))
    if out.requires_grad:
        def backprop():
            _accumulate(a, out.grad / a.data)
        out._backprop = backprop
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = _result(np.exp(a.data), (a,))
    if out.requires_grad:
        def backprop():
            _accumulate(a, out.grad * out.data)
        out._backprop = backprop
    return out


def clip_min(a, lo: float) -> Tensor:
    """max(a, lo) elementwise; gradient flows only where a > lo."""
    a = as_tensor(a)
    out = _result(np.maximum(a.data, lo), (a,))
    if out.requires_grad:
        mask = a.data > lo
        def backprop():
            _accumulate(a, out.grad * mask)
        out._backprop = backprop
    return out


def leaky_relu(a, negative_slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    out = _result(np.where(a.data >= 0, a.data, a.data * a.data.dtype.type(negative_slope)), (a,))
    if out.requires_grad:
        slope = a.data.dtype.type(negative_slope)
        mask = a.data >= 0
        def backprop():
            _accumulate(a, out.grad * np.where(mask, a.data.dtype.type(1), slope))
        out._backprop = backprop
    return out


# -- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires tensors of rank >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    out = _result(a.data @ b.data, (a, b))
    if out.requires_grad:
        def backprop():
            ga = out.grad @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ out.grad
            _accumulate(a, _unbroadcast(ga, a.shape))
            _accumulate(b, _unbroadcast(gb, b.shape))
        out._backprop = backprop
    return out


# -- shape manipulation -------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = _result(a.data.reshape(shape), (a,))
    if out.requires_grad:
        def backprop():
            _accumulate(a, out.grad.reshape(a.shape))
        out._backprop = backprop
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty tensor list")
    out = _result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts))
    if out.requires_grad:
        sizes = [t.shape[axis] for t in ts]
        splits = np.cumsum(sizes)[:-1]
        def backprop():
            for t, piece in zip(ts, np.split(out.grad, splits, axis=axis)):
                _accumulate(t, piece)
        out._backprop = backprop
    return out


def gather_rows(a, index) -> Tensor:
    """out[j...] = a[index[j...]] along axis 0; backward scatter-adds."""
    a = as_tensor(a)
    idx = np.asarray(index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("gather_rows: index must be an integer array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for axis of size {a.shape[0]}")
    out = _result(a.data[idx], (a,))
    if out.requires_grad:
        def backprop():
            ga = np.zeros_like(a.data)
            np.add.at(ga, idx, out.grad)
            _accumulate(a, ga)
        out._backprop = backprop
    return out


# -- reductions --------------------------------------------------------------

def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = _result(a.data.sum(axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        def backprop():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.shape))
        out._backprop = backprop
    return out


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def tmax(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; the gradient routes to the argmax element only
    (first occurrence on ties, deterministic)."""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError(f"max over an empty axis {axis} of shape {a.shape}")
    out_data = a.data.max(axis=axis, keepdims=keepdims)
    out = _result(out_data, (a,))
    if out.requires_grad:
        argmax = np.expand_dims(a.data.argmax(axis=axis), axis)
        def backprop():
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axis)
            ga = np.zeros_like(a.data)
            np.put_along_axis(ga, argmax, g, axis)
            _accumulate(a, ga)
        out._backprop = backprop
    return out


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtraction) along ``axis``."""
    a = as_tensor(a)
    if a.shape[axis] == 0:
        raise ShapeError(f"softmax over an empty axis {axis} of shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _result(s, (a,))
    if out.requires_grad:
        def backprop():
            g = out.grad
            dot = (g * s).sum(axis=axis, keepdims=True)
            _accumulate(a, s * (g - dot))
        out._backprop = backprop
    return out
