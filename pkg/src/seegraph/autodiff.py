"""Reverse-mode automatic differentiation over dense float64 arrays.

Every learnable stage of the pipeline is expressed through the primitives in
this module, so a single tape replay differentiates the whole composite
objective. Tensors wrap numpy float64 arrays; a Tape records primitive
applications in creation order and a reverse sweep visits each entry exactly
once, accumulating gradients additively across fan-out.

Evaluation order is deterministic (tape order is creation order, reductions
are never reordered), so a fixed seed gives bit-identical runs on one build.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_STATE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


def active_tape():
    """The innermost open Tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array plus a gradient-tracking flag."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; each delegates to a recorded primitive.
    def __add__(self, other):
        return add(self, _as_tensor(other, self.shape))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.shape))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(other, self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def _as_tensor(value, shape) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != tuple(shape):
        arr = np.broadcast_to(arr, shape).copy()
    return Tensor(arr)


def constant(data) -> Tensor:
    """Wrap data as a non-differentiable tensor."""
    return Tensor(data, requires_grad=False)


class _Entry:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive applications (creation order).

    Topological by construction: an entry's inputs always precede it.
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        if popped is not self:  # pragma: no cover - misuse guard
            raise ContractError("tape context exited out of order")
        return False

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward):
        self.entries.append(_Entry(op, tuple(inputs), output, backward))

    def __len__(self) -> int:
        return len(self.entries)


def _emit(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward) -> Tensor:
    needs_grad = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs_grad)
    if needs_grad:
        tape = active_tape()
        if tape is not None:
            tape.record(op, inputs, out, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dims do not broadcast: {a.shape} @ {b.shape}") from exc

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("matmul", (a, b), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    return _emit("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")

    def backward(g):
        return g * b.data, g * a.data

    return _emit("elementwise-mul", (a, b), a.data * b.data, backward)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scalar-mul", (a,), a.data * c, lambda g: (g * c,))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat shapes do not align: {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        # Exact split: concatenating these pieces reconstructs g bit-for-bit.
        moved = np.moveaxis(g, axis, 0)
        pieces = []
        for i in range(len(tensors)):
            piece = np.moveaxis(moved[offsets[i]:offsets[i + 1]], 0, axis)
            pieces.append(np.ascontiguousarray(piece))
        return tuple(pieces)

    return _emit("concat", tensors, out, backward)


def slice_(a: Tensor, key) -> Tensor:
    out = a.data[key]
    if not isinstance(out, np.ndarray):
        out = np.asarray(out)
    out = out.copy()

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[key] = g
        return (buf,)

    return _emit("slice", (a,), out, backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        if a.ndim < 2:
            raise ShapeError("transpose needs rank >= 2")
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    # np.transpose returns a view; nothing in the engine mutates activation
    # buffers, so skipping the copy is safe and avoids large allocations.
    return _emit("transpose", (a,), np.transpose(a.data, axes), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from exc

    def backward(g):
        return (g.reshape(a.shape),)

    return _emit("reshape", (a,), out, backward)


def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _spread(grad, axis, shape, keepdims):
    if axis is None:
        return np.broadcast_to(grad, shape).copy()
    if not keepdims:
        for ax in sorted(axis):
            grad = np.expand_dims(grad, ax)
    return np.broadcast_to(grad, shape).copy()


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ax = _normalize_axis(axis, a.ndim)
    out = a.data.mean(axis=ax, keepdims=keepdims)
    count = a.size if ax is None else int(np.prod([a.shape[i] for i in ax]))

    def backward(g):
        return (_spread(g, ax, a.shape, keepdims) / count,)

    return _emit("mean", (a,), out, backward)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ax = _normalize_axis(axis, a.ndim)
    out = a.data.sum(axis=ax, keepdims=keepdims)

    def backward(g):
        return (_spread(g, ax, a.shape, keepdims),)

    return _emit("sum", (a,), out, backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _emit("softmax", (a,), out, backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _emit("sigmoid", (a,), out, backward)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    if not np.all(np.isfinite(out)):
        raise DomainError("exp overflow produced non-finite values")

    def backward(g):
        return (g * out,)

    return _emit("exp", (a,), out, backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive value")
    out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _emit("log", (a,), out, backward)


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("sqrt of non-positive value")
    out = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out,)

    return _emit("sqrt", (a,), out, backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    out = np.where(x > 0, x, slope * x)

    def backward(g):
        return (g * np.where(x > 0, 1.0, slope),)

    return _emit("leaky-relu", (a,), out, backward)


def elu(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x > 0, x, np.expm1(x))

    def backward(g):
        return (g * np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0))),)

    return _emit("elu", (a,), out, backward)


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape).copy()
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} to {shape}") from exc

    def backward(g):
        return (_unbroadcast(g, a.shape),)

    return _emit("broadcast", (a,), out, backward)


_PRIMITIVES: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "elementwise-mul": mul,
    "scalar-mul": scalar_mul,
    "concat": concat,
    "slice": slice_,
    "transpose": transpose,
    "mean": mean,
    "sum": sum_,
    "softmax": softmax,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "leaky-relu": leaky_relu,
    "elu": elu,
    "sqrt": sqrt,
    "broadcast": broadcast_to,
    "reshape": reshape,
}


def forward_primitive(op: str, *inputs, **kwargs) -> Tensor:
    """Apply a primitive by id. Records on the active tape when any input
    requires gradients."""
    if op == "concat":
        return concat(inputs, **kwargs)
    fn = _PRIMITIVES.get(op)
    if fn is None:
        raise ContractError(f"unknown primitive id: {op!r}")
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# reverse sweep
# ---------------------------------------------------------------------------

class Gradients:
    """Result of a backward sweep: gradient arrays keyed by tensor identity."""

    def __init__(self, table: dict[int, np.ndarray]):
        self._table = table

    def get(self, tensor: Tensor) -> np.ndarray | None:
        return self._table.get(id(tensor))

    def require(self, tensor: Tensor) -> np.ndarray:
        grad = self._table.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._table


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse sweep: consume tape entries in reverse order and accumulate
    gradients into every requires_grad input reachable from the loss."""
    if loss.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    if not any(entry.output is loss for entry in tape.entries):
        raise ContractError("loss was not produced on this tape")

    table: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        out_grad = table.pop(id(entry.output), None)
        if out_grad is None:
            continue
        in_grads = entry.backward(out_grad)
        for tensor, grad in zip(entry.inputs, in_grads):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            held = table.get(key)
            table[key] = grad if held is None else held + grad
    return Gradients(table)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float) -> float:
    """Max relative error between the analytic gradient of f at x and central
    finite differences: max_i |analytic_i - fd_i| / max(1, |fd_i|)."""
    if step <= 0:
        raise ContractError("step must be positive")
    probe = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(probe)
    if y.size != 1:
        raise ContractError("grad_check needs a scalar-valued function")
    analytic = backward(tape, y).require(probe)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        hi = f(Tensor(bumped.reshape(x.shape))).data
        bumped[i] = flat[i] - step
        lo = f(Tensor(bumped.reshape(x.shape))).data
        if not (np.isfinite(hi).all() and np.isfinite(lo).all()):
            raise DomainError("non-finite evaluation during finite differences")
        fd = float((hi - lo) / (2.0 * step))
        err = abs(float(analytic.reshape(-1)[i]) - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
