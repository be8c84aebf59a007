"""Minimal dense-tensor reverse-mode autodiff with a surrogate spike operator.

All values are 32-bit floats in row-major order. Operations record onto the
innermost active :class:`GradTape`; with no tape active they run in plain
inference mode. Summation order is fixed, so runs with the same seed
reproduce bit-identically on one machine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError, DimensionError, ParameterError, TapeError

DTYPE = np.float32

LOG_FLOOR = 1e-12  # clamp applied inside every log; documented, mirrored in test oracles


class Tensor:
    """Dense n-d float32 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_needs")

    def __init__(self, data, requires_grad: bool = False):
        # note: ascontiguousarray would promote 0-d scalars to 1-d
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._needs = requires_grad  # True if a grad path reaches a parameter

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "inputs", "bwd")

    def __init__(self, out, inputs, bwd):
        self.out = out
        self.inputs = inputs
        self.bwd = bwd


_TAPE_STACK: list["GradTape"] = []


class GradTape:
    """Ordered record of operations; one backward traversal per tape."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._outputs: set[int] = set()
        self._used = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._nodes)


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(out: Tensor, inputs, bwd):
    out._needs = any(t._needs for t in inputs)
    if not out._needs:
        return
    tape = _active_tape()
    if tape is not None:
        tape._nodes.append(_Node(out, tuple(inputs), bwd))
        tape._outputs.add(id(out))


def backward(loss: Tensor, tape: GradTape) -> None:
    """Populate .grad of every requires_grad tensor reachable from loss."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._used:
        raise TapeError("backward already ran on this tape; build a fresh tape")
    if id(loss) not in tape._outputs:
        raise TapeError("loss was not produced under this tape (missing provenance)")
    tape._used = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape._nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, ig in zip(node.inputs, node.bwd(g)):
            if ig is None or not inp._needs:
                continue
            ig = ig.astype(DTYPE, copy=False)
            acc = grads.get(id(inp))
            grads[id(inp)] = ig if acc is None else acc + ig
            if inp.requires_grad:
                # leaves keep their accumulated grad on the tensor itself
                inp.grad = grads[id(inp)]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcasted gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / linear algebra ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)
    _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    _record(out, (a,), lambda g: (-g,))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    c = DTYPE(c)
    out = Tensor(a.data * c)
    _record(out, (a,), lambda g: (g * c,))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))
    return out


def log(a: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """log with the documented clamp: log(max(x, floor)); zero grad where clamped."""
    clamped = np.maximum(a.data, DTYPE(floor))
    out = Tensor(np.log(clamped))
    mask = (a.data >= floor).astype(DTYPE)
    _record(out, (a,), lambda g: (g * mask / clamped,))
    return out


def mean(a: Tensor, axis=None) -> Tensor:
    out = Tensor(np.mean(a.data, axis=axis))
    if axis is None:
        n = DTYPE(a.size)
        _record(out, (a,), lambda g: (np.broadcast_to(g / n, a.shape).astype(DTYPE),))
    else:
        n = DTYPE(a.shape[axis])

        def bwd(g):
            return (np.broadcast_to(np.expand_dims(g / n, axis), a.shape).astype(DTYPE),)

        _record(out, (a,), bwd)
    return out


def sum_last(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data, axis=-1))
    _record(
        out,
        (a,),
        lambda g: (np.broadcast_to(np.expand_dims(g, -1), a.shape).astype(DTYPE),),
    )
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    _record(out, (a,), lambda g: (g.reshape(a.shape),))
    return out


def stack(tensors) -> Tensor:
    """Stack along a new leading axis."""
    tensors = list(tensors)
    out = Tensor(np.stack([t.data for t in tensors], axis=0))
    _record(out, tuple(tensors), lambda g: tuple(g[i] for i in range(len(tensors))))
    return out


def select_class(a: Tensor, labels: np.ndarray) -> Tensor:
    """Gather a[..., b, labels[b]] over the last axis; works for [B,C] and [T,B,C]."""
    labels = np.asarray(labels)
    c = a.shape[-1]
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"label out of range [0,{c})")
    b = a.shape[-2]
    idx = np.broadcast_to(labels.reshape((1,) * (a.ndim - 2) + (b, 1)), a.shape[:-1] + (1,))
    out = Tensor(np.take_along_axis(a.data, idx, axis=-1).squeeze(-1))

    def bwd(g):
        full = np.zeros(a.shape, dtype=DTYPE)
        np.put_along_axis(full, idx, np.expand_dims(g, -1), axis=-1)
        return (full,)

    _record(out, (a,), bwd)
    return out


def softmax_temperature(a: Tensor, tau: float) -> Tensor:
    """Temperature softmax over the last axis, stabilized by max subtraction."""
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    tau = DTYPE(tau)
    z = a.data / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def bwd(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return ((p * (g - inner) / tau).astype(DTYPE),)

    _record(out, (a,), bwd)
    return out


# ---------------------------------------------------------------------------
# spiking nonlinearity


SURROGATE_KINDS = ("rectangular", "triangular", "piecewise_quadratic")


@dataclass(frozen=True)
class SurrogateSpec:
    """Shape of the backward-pass stand-in for the Heaviside derivative."""

    kind: str = "piecewise_quadratic"
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ParameterError(f"unknown surrogate kind {self.kind!r}")
        if self.width <= 0:
            raise ParameterError(f"surrogate width must be positive, got {self.width}")

    def derivative(self, x: np.ndarray) -> np.ndarray:
        """Closed-form surrogate derivative at x = v - v_th; zero for |x| >= width."""
        w = DTYPE(self.width)
        ax = np.abs(x)
        if self.kind == "rectangular":
            return ((ax < w) / w).astype(DTYPE)
        if self.kind == "triangular":
            return (np.maximum(DTYPE(0), 1 - ax / w) / w).astype(DTYPE)
        return np.maximum(DTYPE(0), (2 / w) * (1 - ax / w)).astype(DTYPE)


def spike(v: Tensor, v_th: float, s: SurrogateSpec) -> Tensor:
    """Heaviside step at v_th (1 where v >= v_th); surrogate derivative backward."""
    v_th = DTYPE(v_th)
    out = Tensor((v.data >= v_th).astype(DTYPE))
    d = s.derivative(v.data - v_th)
    _record(out, (v,), lambda g: (g * d,))
    return out


# ---------------------------------------------------------------------------
# conv / pooling (im2col based; desk scale only)


def _conv_geometry(h, w, kh, kw, stride, padding):
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    return oh, ow


def _im2col(x: np.ndarray, kh, kw, stride, padding):
    b, c, h, w = x.shape
    oh, ow = _conv_geometry(h, w, kh, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols, oh, ow


def _col2im(cols: np.ndarray, x_shape, kh, kw, stride, padding):
    b, c, h, w = x_shape
    oh, ow = _conv_geometry(h, w, kh, kw, stride, padding)
    xp = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if padding:
        xp = xp[:, :, padding:-padding, padding:-padding]
    return xp


def conv2d(x: Tensor, w: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects [B,C,H,W] and [O,C,kh,kw], got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    b = x.shape[0]
    co, ci, kh, kw = w.shape
    cols, oh, ow = _im2col(x.data, kh, kw, stride, padding)
    cols2 = cols.transpose(0, 4, 5, 1, 2, 3).reshape(b * oh * ow, ci * kh * kw)
    wmat = w.data.reshape(co, ci * kh * kw)
    y = cols2 @ wmat.T + bias.data
    out = Tensor(y.reshape(b, oh, ow, co).transpose(0, 3, 1, 2))

    def bwd(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(b * oh * ow, co)
        dw = (g2.T @ cols2).reshape(co, ci, kh, kw)
        db = g2.sum(axis=0)
        dcols2 = g2 @ wmat
        dcols = dcols2.reshape(b, oh, ow, ci, kh, kw).transpose(0, 3, 4, 5, 1, 2)
        dx = _col2im(dcols, x.shape, kh, kw, stride, padding)
        return dx, dw, db

    _record(out, (x, w, bias), bwd)
    return out


def avgpool2d(x: Tensor, window: int) -> Tensor:
    b, c, h, w = x.shape
    if h % window or w % window:
        raise DimensionError(f"avgpool2d window {window} does not divide spatial dims {h}x{w}")
    oh, ow = h // window, w // window
    blocks = x.data.reshape(b, c, oh, window, ow, window)
    out = Tensor(blocks.mean(axis=(3, 5)))
    n = DTYPE(window * window)

    def bwd(g):
        ge = np.broadcast_to(g[:, :, :, None, :, None] / n, (b, c, oh, window, ow, window))
        return (ge.reshape(b, c, h, w).astype(DTYPE),)

    _record(out, (x,), bwd)
    return out
