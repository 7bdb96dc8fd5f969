"""Dense float64 tensor with tape-based reverse-mode differentiation.

Storage is a C-contiguous numpy array (row-major), and slicing copies,
so no two tensors alias mutable memory. Differentiable operations record
onto the innermost active `GradTape`; with no tape open they run as plain
forward computations (that is the inference path for frozen models).

The tape holds the executed operations in order; `GradTape.backward`
replays them in exact reverse order and accumulates one gradient array
per reached tensor. Tensors never reached from the loss read back as
exactly zero.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import NumericsError, ShapeMismatchError

__all__ = [
    "Tensor",
    "GradTape",
    "apply_op",
    "concat",
    "conv2d",
    "softmax_channel",
    "log_softmax_channel",
    "gather_channel",
]


def _as_f64c(arr: np.ndarray) -> np.ndarray:
    # np.ascontiguousarray widens 0-d arrays to 1-d; 0-d is already contiguous
    if arr.flags["C_CONTIGUOUS"]:
        return arr
    return np.ascontiguousarray(arr)


class Tensor:
    """Immutable-by-convention value node. `data` is float64, C-contiguous."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64c(np.array(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # internal: adopt a freshly computed array without re-copying
        t = cls.__new__(cls)
        t.data = _as_f64c(np.asarray(arr, dtype=np.float64))
        t.requires_grad = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        return _binary(self, other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, "sub")

    def __rsub__(self, other):
        return _binary(self, other, "rsub")

    def __mul__(self, other):
        return _binary(self, other, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; scale by a scalar")
        return self * (1.0 / float(other))

    def __neg__(self):
        out = Tensor._wrap(-self.data)
        _record(out, (self,), lambda g: [(self, -g)])
        return out

    # -- unary ops -----------------------------------------------------

    def relu(self) -> "Tensor":
        out = Tensor._wrap(np.maximum(self.data, 0.0))
        mask = self.data > 0.0
        _record(out, (self,), lambda g: [(self, g * mask)])
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise NumericsError("log requires strictly positive entries")
        out = Tensor._wrap(np.log(self.data))
        x = self.data
        _record(out, (self,), lambda g: [(self, g / x)])
        return out

    def sum(self) -> "Tensor":
        out = Tensor._wrap(np.asarray(self.data.sum()))
        shape = self.data.shape
        _record(out, (self,), lambda g: [(self, np.full(shape, float(g)))])
        return out

    def mean(self, axis: int) -> "Tensor":
        if not -self.ndim <= axis < self.ndim:
            raise ShapeMismatchError(f"axis {axis} out of range for shape {self.shape}")
        axis = axis % self.ndim
        out = Tensor._wrap(self.data.mean(axis=axis))
        n = self.data.shape[axis]

        def backward(g):
            return [(self, np.repeat(np.expand_dims(g / n, axis), n, axis=axis))]

        _record(out, (self,), backward)
        return out

    def transpose(self, axes: tuple[int, ...]) -> "Tensor":
        out = Tensor._wrap(self.data.transpose(axes))
        inv = tuple(np.argsort(axes))
        _record(out, (self,), lambda g: [(self, g.transpose(inv))])
        return out

    def reshape(self, shape) -> "Tensor":
        out = Tensor._wrap(self.data.reshape(shape))
        orig = self.data.shape
        _record(out, (self,), lambda g: [(self, g.reshape(orig))])
        return out

    def __getitem__(self, index) -> "Tensor":
        # basic indexing only; the result is a copy, never a view
        out = Tensor._wrap(self.data[index].copy())
        shape = self.data.shape

        def backward(g):
            gx = np.zeros(shape)
            gx[index] += g
            return [(self, gx)]

        _record(out, (self,), backward)
        return out


def _binary(a: Tensor, b, op: str) -> Tensor:
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ShapeMismatchError(f"operand shapes differ: {a.shape} vs {b.shape}")
        if op == "add":
            out = Tensor._wrap(a.data + b.data)
            _record(out, (a, b), lambda g: [(a, g), (b, g)])
        elif op == "sub":
            out = Tensor._wrap(a.data - b.data)
            _record(out, (a, b), lambda g: [(a, g), (b, -g)])
        elif op == "rsub":
            return _binary(b, a, "sub")
        else:
            out = Tensor._wrap(a.data * b.data)
            ad, bd = a.data, b.data
            _record(out, (a, b), lambda g: [(a, g * bd), (b, g * ad)])
        return out
    c = float(b)
    if op == "add":
        out = Tensor._wrap(a.data + c)
        _record(out, (a,), lambda g: [(a, g)])
    elif op == "sub":
        out = Tensor._wrap(a.data - c)
        _record(out, (a,), lambda g: [(a, g)])
    elif op == "rsub":
        out = Tensor._wrap(c - a.data)
        _record(out, (a,), lambda g: [(a, -g)])
    else:
        out = Tensor._wrap(a.data * c)
        _record(out, (a,), lambda g: [(a, g * c)])
    return out


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatchError("concat of an empty sequence")
    nd = tensors[0].ndim
    if not -nd <= axis < nd:
        raise ShapeMismatchError(f"axis {axis} out of range for shape {tensors[0].shape}")
    axis = axis % nd
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    ts = tuple(tensors)

    def backward(g):
        return list(zip(ts, np.split(g, splits, axis=axis)))

    _record(out, ts, backward)
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of a (C,H,W) input with an (F,C,k,k) kernel.

    Odd square kernels only; output spatial dims must come out as positive
    integers for the given stride/padding.
    """
    if x.ndim != 3 or w.ndim != 4 or b.ndim != 1:
        raise ShapeMismatchError(
            f"conv2d expects (C,H,W), (F,C,k,k), (F,); got {x.shape}, {w.shape}, {b.shape}"
        )
    C, H, W = x.shape
    F, Cw, k, k2 = w.shape
    if Cw != C or k != k2 or b.shape[0] != F:
        raise ShapeMismatchError(
            f"conv2d shape mismatch: input {x.shape} vs kernel {w.shape} vs bias {b.shape}"
        )
    if k % 2 == 0:
        raise ShapeMismatchError(f"kernel size must be odd, got {k}")
    if padding < 0 or stride < 1:
        raise ShapeMismatchError(f"invalid stride/padding ({stride}, {padding})")
    for name, dim in (("height", H), ("width", W)):
        span = dim + 2 * padding - k
        if span < 0 or span % stride != 0:
            raise ShapeMismatchError(
                f"conv2d output {name} is not a positive integer for input {x.shape}, "
                f"kernel {w.shape}, stride {stride}, padding {padding}"
            )
    out = Tensor._wrap(kernels.conv2d_forward(x.data, w.data, b.data, stride, padding))
    xd, wd = x.data, w.data

    def backward(g):
        g = np.ascontiguousarray(g)
        return [
            (x, kernels.conv2d_grad_input(wd, g, xd.shape, stride, padding)),
            (w, kernels.conv2d_grad_kernel(xd, g, wd.shape, stride, padding)),
            (b, g.sum(axis=(1, 2))),
        ]

    _record(out, (x, w, b), backward)
    return out


def softmax_channel(x: Tensor) -> Tensor:
    """Softmax across axis 0 (the class axis), stable, per remaining index."""
    z = x.data - x.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=0, keepdims=True)
    out = Tensor._wrap(p)

    def backward(g):
        return [(x, p * (g - (p * g).sum(axis=0, keepdims=True)))]

    _record(out, (x,), backward)
    return out


def log_softmax_channel(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0, keepdims=True))
    logp = z - lse
    out = Tensor._wrap(logp)
    p = np.exp(logp)

    def backward(g):
        return [(x, g - p * g.sum(axis=0, keepdims=True))]

    _record(out, (x,), backward)
    return out


def gather_channel(x: Tensor, index: np.ndarray) -> Tensor:
    """Pick one channel per spatial position: out[h,w] = x[index[h,w],h,w]."""
    if x.ndim != 3:
        raise ShapeMismatchError(f"gather_channel expects (K,H,W), got {x.shape}")
    K, H, W = x.shape
    idx = np.asarray(index)
    if idx.shape != (H, W):
        raise ShapeMismatchError(f"index shape {idx.shape} does not match spatial dims {(H, W)}")
    if idx.min() < 0 or idx.max() >= K:
        raise ShapeMismatchError(f"channel index outside [0, {K})")
    rows, cols = np.indices((H, W))
    out = Tensor._wrap(x.data[idx, rows, cols])

    def backward(g):
        gx = np.zeros((K, H, W))
        gx[idx, rows, cols] = g  # (h,w) pairs are unique, no accumulation needed
        return [(x, gx)]

    _record(out, (x,), backward)
    return out


def apply_op(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    """Register a custom differentiable operation on the active tape.

    `backward(g)` must return [(input_tensor, grad_array), ...] for the
    inputs that receive gradient.
    """
    out = Tensor._wrap(out_data)
    _record(out, inputs, backward)
    return out


# -- tape ---------------------------------------------------------------

_TAPE_STACK: list["GradTape"] = []


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
    if not _TAPE_STACK:
        return
    tape = _TAPE_STACK[-1]
    if any(t.requires_grad or id(t) in tape._live for t in inputs):
        tape._entries.append((out, inputs, backward))
        tape._live.add(id(out))


class GradTape:
    """Execution-ordered record of differentiable ops for one forward pass."""

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._live: set[int] = set()
        self._grads: dict[int, np.ndarray] = {}

    def __enter__(self) -> "GradTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of `loss` w.r.t. every tensor on the tape."""
        if loss.ndim != 0:
            raise ShapeMismatchError(f"loss must be a scalar, got shape {loss.shape}")
        if not np.isfinite(loss.data):
            raise NumericsError(f"non-finite loss: {float(loss.data)}")
        self._grads = {id(loss): np.ones(())}
        for out, inputs, backward in reversed(self._entries):
            g = self._grads.get(id(out))
            if g is None:
                continue
            for tensor, contrib in backward(g):
                prev = self._grads.get(id(tensor))
                if prev is None:
                    self._grads[id(tensor)] = np.array(contrib, dtype=np.float64)
                else:
                    prev += contrib

    def grad(self, tensor: Tensor) -> np.ndarray:
        """Gradient of the last backward() loss; exact zeros if unreached."""
        g = self._grads.get(id(tensor))
        if g is None:
            return np.zeros(tensor.shape)
        return g
