"""Dense float64 tensors with a reverse-mode differentiation tape.

A :class:`Tensor` is an immutable numpy array plus, optionally, the tape and
node id that produced it. Operations on tensors that carry no tape are plain
numpy computations; as soon as one operand lives on a tape the result is
recorded there together with its vector-Jacobian product.

Example::

    tape = Tape()
    x = tape.watch([[1.0, 2.0], [3.0, 4.0]])
    loss = tsum(softmax(x, axis=-1) * x)
    (gx,) = tape.gradient(loss, [x])
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "swap_last",
    "reshape",
    "take",
    "concat",
    "stack",
    "tsum",
    "mean",
    "exp",
    "sqrt",
    "power",
    "relu",
    "maximum",
    "minimum",
    "softmax",
    "layer_norm",
    "finite_diff_grad",
]

LN_EPS = 1e-5

Vjp = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """Immutable n-dimensional float64 array, optionally recorded on a tape."""

    __slots__ = ("data", "tape", "node")
    __array_priority__ = 1000

    def __init__(self, data, *, tape: "Tape | None" = None, node: int | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.tape = tape
        self.node = node

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape: "Tape | None" = None, node: int | None = None) -> "Tensor":
        obj = cls.__new__(cls)
        if type(arr) is not np.ndarray or arr.dtype != np.float64:
            arr = np.asarray(arr, dtype=np.float64)
        if arr.flags.writeable:
            arr.setflags(write=False)
        obj.data = arr
        obj.tape = tape
        obj.node = node
        return obj

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return swap_last(self)

    def numpy(self) -> np.ndarray:
        """Return a writable copy of the underlying array."""
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __float__(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"cannot convert tensor of shape {self.shape} to float")
        return float(self.data.reshape(-1)[0])

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        where = f", node={self.node}" if self.tape is not None else ""
        return f"Tensor(shape={list(self.shape)}{where})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)


class Tape:
    """Ordered record of primitive operations for one forward/backward pass.

    Nodes are appended in execution order, so every node's inputs precede it.
    A tape is single-writer; concurrent passes need separate tapes.
    """

    def __init__(self):
        self._ops: list[str] = []
        self._inputs: list[tuple[int | None, ...]] = []
        self._vjps: list[Vjp | None] = []
        self._shapes: list[tuple[int, ...]] = []

    def __len__(self) -> int:
        return len(self._ops)

    def watch(self, value) -> Tensor:
        """Register ``value`` as a leaf and return the recorded tensor."""
        data = value.data if isinstance(value, Tensor) else value
        arr = np.array(data, dtype=np.float64)
        return self._push("leaf", arr, (), None)

    def _push(self, op: str, out: np.ndarray, inputs: Sequence[Tensor], vjp: Vjp | None) -> Tensor:
        node = len(self._ops)
        self._ops.append(op)
        self._inputs.append(tuple(t.node if t.tape is self else None for t in inputs))
        self._vjps.append(vjp)
        self._shapes.append(np.shape(out))
        return Tensor._wrap(out, tape=self, node=node)

    def op(self, node: int) -> str:
        return self._ops[node]

    def inputs(self, node: int) -> tuple[int | None, ...]:
        return self._inputs[node]

    def leaves(self) -> list[int]:
        return [i for i, op in enumerate(self._ops) if op == "leaf"]

    def gradient(self, output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of scalar ``output`` with respect to each leaf in ``wrt``."""
        for t in wrt:
            if t.tape is not self or self._ops[t.node] != "leaf":
                raise ContractError("gradient targets must be leaves watched on this tape")
        grads = backward(self, output)
        return [grads[t.node] for t in wrt]


def backward(tape: Tape, output: Tensor) -> dict[int, np.ndarray]:
    """Propagate d(output)/d(node) back through ``tape``.

    Returns a mapping from every leaf node id to its gradient; leaves that do
    not influence ``output`` get exact zeros.
    """
    if output.tape is not tape:
        raise ContractError("output tensor was not recorded on this tape")
    if output.size != 1:
        raise ContractError(f"backward needs a scalar output, got shape {list(output.shape)}")
    grads: list[np.ndarray | None] = [None] * (output.node + 1)
    grads[output.node] = np.ones(output.shape)
    for i in range(output.node, -1, -1):
        g = grads[i]
        vjp = tape._vjps[i]
        if g is None or vjp is None:
            continue
        for src, gi in zip(tape._inputs[i], vjp(g)):
            if src is None or gi is None:
                continue
            if grads[src] is None:
                grads[src] = np.array(gi, dtype=np.float64)
            else:
                grads[src] = grads[src] + gi
    result = {}
    for leaf in tape.leaves():
        g = grads[leaf] if leaf < len(grads) else None
        result[leaf] = g if g is not None else np.zeros(tape._shapes[leaf])
    return result


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, out: np.ndarray, inputs: Sequence[Tensor], vjp: Vjp) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif t.tape is not tape:
                raise ContractError("operands are recorded on different tapes")
    if tape is None:
        return Tensor._wrap(out)
    return tape._push(op, out, inputs, vjp)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _elementwise(op: str, fn, a: Tensor, b: Tensor) -> np.ndarray:
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise DimensionError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} do not broadcast") from None


# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("add", _elementwise("add", np.add, a, b), (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("sub", _elementwise("sub", np.subtract, a, b), (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("mul", _elementwise("mul", np.multiply, a, b), (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _elementwise("div", np.divide, a, b)

    def vjp(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _record("div", out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = _elementwise("maximum", np.greater_equal, a, b)
    return _record("maximum", np.where(pick_a, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = _elementwise("minimum", np.less_equal, a, b)
    return _record("minimum", np.where(pick_a, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record("exp", out, (a,), lambda g: (g * out,))


def sqrt(a) -> Tensor:
    """Elementwise square root; the derivative at 0 is taken to be 0."""
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _record("sqrt", out, (a,), vjp)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** p
    return _record("power", out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    live = a.data > 0
    return _record("relu", np.where(live, a.data, 0.0), (a,), lambda g: (g * live,))


# linear algebra and shape


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast.

    Summation order is whatever numpy's BLAS uses for the shape, which is
    fixed for a given build, so repeated runs are bit-identical.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {list(a.shape)} and {list(b.shape)} are not aligned")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {list(a.shape)} and {list(b.shape)} do not broadcast") from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record("matmul", out, (a, b), vjp)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _record("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def swap_last(a) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot view {list(a.shape)} as {list(shape)}") from None
    return _record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def take(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _record("take", np.array(out), (a,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[list(t.shape) for t in ts]}: {exc}") from None
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _record("concat", out, ts, lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {[list(t.shape) for t in ts]}: {exc}") from None
    return _record("stack", out, ts,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(ts))))


# reductions


def tsum(a, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _record("sum", np.asarray(out), (a,), vjp)


def mean(a, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) / float(count)


# normalizers


def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with the slice maximum subtracted first."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {list(a.shape)}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _record("softmax", out, (a,), vjp)


def layer_norm(x, gamma, beta, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then scale and shift.

    The population variance is used without an ``eps`` term in the
    denominator. Vectors whose variance is below ``eps`` normalize to 0.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1] if x.ndim else 0
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(
            f"layer_norm: last axis {d} vs gamma {list(gamma.shape)}, beta {list(beta.shape)}")
    centered = x.data - np.mean(x.data, axis=-1, keepdims=True)
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    live = var >= eps
    inv_std = np.where(live, 1.0 / np.sqrt(np.where(live, var, 1.0)), 0.0)
    y = centered * inv_std
    out = y * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def vjp(g):
        gy = g * gamma.data
        gx = inv_std * (gy - np.mean(gy, axis=-1, keepdims=True)
                        - y * np.mean(gy * y, axis=-1, keepdims=True))
        return gx, np.sum(g * y, axis=lead), np.sum(g, axis=lead)

    return _record("layer_norm", out, (x, gamma, beta), vjp)


# numerical differentiation


def finite_diff_grad(f: Callable[[Tensor], "Tensor | float"], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``, one element at a time."""
    if not h > 0:
        raise ContractError(f"step h must be positive, got {h}")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64, order="C")
    grad = np.empty_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(f(Tensor(base)))
        flat[i] = orig - h
        down = float(f(Tensor(base)))
        flat[i] = orig
        grad.flat[i] = (up - down) / (2.0 * h)
    return grad
