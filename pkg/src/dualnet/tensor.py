"""Dense tensors and tape-based reverse-mode differentiation.

Every primitive checks shapes explicitly and never broadcasts. Operations
record themselves on the innermost active :class:`Tape`; outside a tape
they run as plain numpy computations (inference mode).
"""
from __future__ import annotations

import contextlib
import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import NonFiniteError, ShapeError

_DTYPES = {"double": np.float64, "single": np.float32}
_state = threading.local()
_ids = itertools.count()


def _dtype_stack() -> list:
    if not hasattr(_state, "dtypes"):
        _state.dtypes = [np.float64]
    return _state.dtypes


def _tape_stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def default_dtype():
    return _dtype_stack()[-1]


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the dtype of newly created tensors ("double" or "single")."""
    try:
        dtype = _DTYPES[name]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {name!r}") from None
    stack = _dtype_stack()
    stack.append(dtype)
    try:
        yield dtype
    finally:
        stack.pop()


def dtype_for(name: str):
    try:
        return _DTYPES[name]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(_DTYPES)}, got {name!r}") from None


class Tensor:
    """A row-major numeric array with an identity on the tape."""

    __slots__ = ("data", "requires_grad", "id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.array(data, dtype=dtype or default_dtype(), order="C", copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(arr)
        out.requires_grad = requires_grad
        out.id = next(_ids)
        out.name = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class TapeEntry:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of primitive applications.

    Entries are appended as operations execute, so inputs always precede
    their consumers. ``check_finite`` turns on NaN/Inf detection at every
    op boundary (forward values and backward gradients).
    """

    check_finite: bool = False
    entries: list = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def __len__(self):
        return len(self.entries)

    def record(self, op, inputs, output, backward):
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward))

    def backward(self, loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict:
        return backward(loss, self, wrt)


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording (e.g. while evaluating a model inside a training tape)."""
    stack = _tape_stack()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def _finite_or_raise(op: str, arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op}: non-finite values in {what}")


def _emit(op: str, value: np.ndarray, inputs: Sequence[Tensor], grad_fn) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(value, needs)
    if tape is not None and tape.check_finite:
        _finite_or_raise(op, value, "output")
    if needs:
        tape.record(op, inputs, out, grad_fn)
    return out


def backward(loss: Tensor, tape: Tape, wrt: Iterable[Tensor] | None = None) -> dict:
    """Reverse sweep over ``tape``.

    Returns a map from tensor id to gradient array for every leaf that
    requires grad and feeds the tape, plus every tensor in ``wrt``. Leaves
    the loss does not depend on get zeros.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {e.output.id for e in tape.entries}
    if loss.id in produced:
        leaves = {}
    elif loss.requires_grad:
        leaves = {loss.id: loss}
    else:
        raise ValueError("loss is not on the tape")
    for entry in tape.entries:
        for t in entry.inputs:
            if t.requires_grad and t.id not in produced:
                leaves.setdefault(t.id, t)
    for t in wrt or ():
        leaves.setdefault(t.id, t)

    grads = {loss.id: np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        g = grads.pop(entry.output.id, None)
        if g is None:
            continue
        in_grads = entry.backward(g)
        for t, gi in zip(entry.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if tape.check_finite:
                _finite_or_raise(entry.op, gi, "gradient")
            if gi.shape != t.shape:
                raise ShapeError(f"{entry.op}: gradient shape {gi.shape} != input shape {t.shape}")
            if t.id in grads:
                grads[t.id] = grads[t.id] + gi
            else:
                grads[t.id] = gi
    return {i: grads.get(i, np.zeros_like(t.data)) for i, t in leaves.items()}


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# ---------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias ``b[c]`` along the last axis of ``x[..., c]``."""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: bias shape {b.shape} does not match channels of {x.shape}")
    axes = tuple(range(x.ndim - 1))
    return _emit("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit("relu", np.where(mask, x.data, 0.0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log(x: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log of ``max(x, floor)``; the gradient is zero where the floor binds."""
    clipped = np.maximum(x.data, floor)
    live = x.data >= floor if floor > 0 else np.ones(x.shape, dtype=bool)

    def grad(g):
        return (np.where(live, g / clipped, 0.0),)

    return _emit("log", np.log(clipped), (x,), grad)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, with max-subtraction."""
    if x.ndim < 1:
        raise ShapeError("softmax_rows needs at least one axis")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax_rows", y, (x,), grad)


# --------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    return _emit("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    return _emit("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def mean_axis(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    if n < 1:
        raise ShapeError(f"mean_axis: axis {axis} is empty")

    def grad(g):
        return (np.repeat(np.expand_dims(g, axis), n, axis=axis) / n,)

    return _emit("mean_axis", x.data.mean(axis=axis), (x,), grad)


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """``out[i] = x[i, index[i]]`` for a 2-D ``x``."""
    if x.ndim != 2 or index.shape != (x.shape[0],):
        raise ShapeError(f"pick: need x[m,n] and index[m], got {x.shape} and {index.shape}")
    rows = np.arange(x.shape[0])

    def grad(g):
        gx = np.zeros_like(x.data)
        gx[rows, index] = g
        return (gx,)

    return _emit("pick", x.data[rows, index], (x,), grad)


# ------------------------------------------------------------ shape / linalg


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        y = x.data.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from err
    return _emit("reshape", y, (x,), lambda g: (g.reshape(x.shape),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product; dA = G·Bᵀ, dB = Aᵀ·G."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} @ {b.shape}")
    return _emit("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched product of ``a[n,p,q]`` and ``b[n,q,r]``."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm: incompatible shapes {a.shape} and {b.shape}")

    def grad(g):
        return g @ b.data.transpose(0, 2, 1), a.data.transpose(0, 2, 1) @ g

    return _emit("bmm", a.data @ b.data, (a, b), grad)


def transpose_last(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError("transpose_last needs at least two axes")
    return _emit("transpose", np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def linear(x: Tensor, w: Tensor) -> Tensor:
    """Apply ``w[c_in, c_out]`` at every position of ``x[..., c_in]``."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: weight {w.shape} does not match input channels of {x.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    out = matmul(flat, w)
    return reshape(out, lead + (w.shape[1],)) if x.ndim != 2 else out


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last (channel) axis."""
    xs = tuple(xs)
    if not xs:
        raise ShapeError("concat_channels: empty input list")
    lead = xs[0].shape[:-1]
    for i, t in enumerate(xs):
        if t.shape[:-1] != lead:
            raise ShapeError(
                f"concat_channels: input {i} has leading shape {t.shape[:-1]}, expected {lead}"
            )
    if len(xs) == 1:
        return xs[0]
    bounds = np.cumsum([0] + [t.shape[-1] for t in xs])

    def grad(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return _emit("concat", np.concatenate([t.data for t in xs], axis=-1), xs, grad)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)
