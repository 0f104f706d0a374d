"""Dense float64 tensors with a reverse-mode differentiation tape.

Tensors are immutable wrappers around numpy arrays. Operations executed while
a :class:`Tape` is active are recorded together with their vector-Jacobian
products, and :func:`backward` replays the record in reverse.

    with Tape() as tape:
        loss = sum_(matmul(a, b))
    grads = backward(tape, loss)
    grads[a]  # ndarray, same shape as a
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL_SIZES = (1, 3, 5)


class DimensionError(ValueError):
    pass


class Tensor:
    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if 0 in arr.shape:
            raise DimensionError(f"zero-sized dimension in shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("tensor data contains NaN or Inf")
        arr.flags.writeable = False
        self.data = arr

    @classmethod
    def _wrap_result(cls, arr: np.ndarray) -> "Tensor":
        arr = np.asarray(arr, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = arr.copy()
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("operation produced NaN or Inf")
        t = cls.__new__(cls)
        arr.flags.writeable = False
        t.data = arr
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

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={np.array2string(self.data, threshold=8)})"

    def __len__(self) -> int:
        return self.shape[0]

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape))


# ---------------------------------------------------------------------------
# tape


@dataclass
class _Node:
    inputs: tuple
    output: Tensor
    vjp: Callable[[np.ndarray], tuple]


_state = threading.local()


def _stack() -> list:
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


class Tape:
    """Ordered record of differentiable operations.

    Single-owner: enter it on one thread, record, then call :func:`backward`.
    Nested tapes are allowed; only the innermost one records.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().remove(self)
        return False


class no_record:
    """Suspend recording inside an active tape."""

    def __enter__(self):
        _stack().append(None)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False


def _record(out: Tensor, inputs: tuple, vjp) -> Tensor:
    stack = _stack()
    if stack and stack[-1] is not None:
        stack[-1].nodes.append(_Node(inputs, out, vjp))
    return out


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Adjoints of ``loss`` for every tensor reachable from it on ``tape``."""
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if not any(node.output is loss for node in tape.nodes):
        raise ValueError("loss was not produced on this tape")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones(loss.shape)}
    for node in reversed(tape.nodes):
        g = grads.get(node.output)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None:
                continue
            prev = grads.get(inp)
            grads[inp] = gi if prev is None else prev + gi
    return grads


def value_and_grad(fn: Callable[..., Tensor], params: Sequence[Tensor]):
    """Evaluate ``fn(*params)`` and return (loss value, list of gradients)."""
    with Tape() as tape:
        loss = fn(*params)
    grads = backward(tape, loss)
    return loss.item(), [grads.get(p, np.zeros(p.shape)) for p in params]


# ---------------------------------------------------------------------------
# elementwise


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap_result(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap_result(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap_result(a.data * b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._wrap_result(a.data / b.data)
    return _record(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def _unary(t: Tensor, value: np.ndarray, dfn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    out = Tensor._wrap_result(value)
    return _record(out, (t,), lambda g: (g * dfn(out.data),))


def exp(t: Tensor) -> Tensor:
    return _unary(t, np.exp(t.data), lambda y: y)


def log(t: Tensor) -> Tensor:
    x = t.data
    return _unary(t, np.log(x), lambda y: 1.0 / x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(t: Tensor) -> Tensor:
    return _unary(t, _sigmoid(t.data), lambda y: y * (1.0 - y))


def softplus(t: Tensor) -> Tensor:
    """log(1 + e^x), overflow-safe."""
    x = t.data
    return _unary(t, np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))), lambda y: _sigmoid(x))


def relu(t: Tensor) -> Tensor:
    x = t.data
    return _unary(t, np.maximum(x, 0.0), lambda y: (x > 0).astype(np.float64))


def abs_(t: Tensor) -> Tensor:
    x = t.data
    return _unary(t, np.abs(x), lambda y: np.sign(x))


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data
    out = Tensor._wrap_result(np.where(pick_a, a.data, b.data))
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    out = Tensor._wrap_result(np.where(pick_a, a.data, b.data))
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)),
    )


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor._wrap_result(np.sum(t.data, axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, t.shape).copy(),)

    return _record(out, (t,), vjp)


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = t.size if axis is None else np.prod([t.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum_(t, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(t: Tensor, shape) -> Tensor:
    out = Tensor._wrap_result(t.data.reshape(shape))
    return _record(out, (t,), lambda g: (g.reshape(t.shape),))


def permute(t: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(t.ndim)):
        raise ValueError(f"{axes} is not a permutation of the {t.ndim} axes of {t.shape}")
    inverse = tuple(np.argsort(axes))
    out = Tensor._wrap_result(np.transpose(t.data, axes))
    return _record(out, (t,), lambda g: (np.transpose(g, inverse),))


def transpose(t: Tensor) -> Tensor:
    if t.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got shape {t.shape}")
    return permute(t, (1, 0))


def concat(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    out = Tensor._wrap_result(np.concatenate([t.data for t in ts], axis=axis))
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _record(out, tuple(ts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    out = Tensor._wrap_result(np.stack([t.data for t in ts], axis=axis))
    n = len(ts)
    return _record(
        out,
        tuple(ts),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
    )


def take(t: Tensor, index) -> Tensor:
    """Numpy-style indexing (basic or advanced); repeated indices accumulate."""
    out = Tensor._wrap_result(t.data[index])

    def vjp(g):
        gt = np.zeros(t.shape)
        np.add.at(gt, index, g)
        return (gt,)

    return _record(out, (t,), vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of [M x K] by [K x N]; equal leading batch dims allowed."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor._wrap_result(np.matmul(a.data, b.data))
    return _record(
        out,
        (a, b),
        lambda g: (np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g)),
    )


def linear(t: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map on the last axis: t @ W + b with W [K x N], b [N]."""
    k = t.shape[-1]
    if weight.ndim != 2 or weight.shape[0] != k or (bias is not None and bias.shape != (weight.shape[1],)):
        raise DimensionError(
            f"linear shape mismatch: input {t.shape}, weight {weight.shape}, "
            f"bias {None if bias is None else bias.shape}"
        )
    n = weight.shape[1]
    y = t.data @ weight.data
    if bias is not None:
        y = y + bias.data
    out = Tensor._wrap_result(y)

    def vjp(g):
        g2 = g.reshape(-1, n)
        grads = (g @ weight.data.T, t.data.reshape(-1, k).T @ g2)
        return grads + ((g2.sum(axis=0),) if bias is not None else ())

    inputs = (t, weight) if bias is None else (t, weight, bias)
    return _record(out, inputs, vjp)


def softmax_last(t: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis with per-slice max subtraction.

    ``mask`` (broadcastable boolean) excludes entries; excluded entries get
    weight 0 and a slice with nothing left is all zeros.
    """
    x = t.data
    if mask is None:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        masked = np.where(mask, x, -np.inf)
        m = masked.max(axis=-1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.where(mask, np.exp(np.where(mask, x - m, 0.0)), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    y = e / np.where(s > 0, s, 1.0)
    out = Tensor._wrap_result(y)

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _record(out, (t,), vjp)


def layer_norm(t: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean, unit variance over the last axis; no affine part."""
    c = t.data - t.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((c * c).mean(axis=-1, keepdims=True) + eps)
    y = c * inv
    out = Tensor._wrap_result(y)

    def vjp(g):
        gm = g - g.mean(axis=-1, keepdims=True)
        return (inv * (gm - y * np.mean(g * y, axis=-1, keepdims=True)),)

    return _record(out, (t,), vjp)


# ---------------------------------------------------------------------------
# convolution, pooling, normalization


@dataclass(frozen=True)
class ConvKernel:
    """Square kernel, weights [out_ch x in_ch x size x size], bias [out_ch]."""

    size: int
    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.size not in KERNEL_SIZES:
            raise ValueError(f"kernel size must be one of {KERNEL_SIZES}, got {self.size}")
        w = self.weights.shape
        if len(w) != 4 or w[2:] != (self.size, self.size) or self.bias.shape != (w[0],):
            raise DimensionError(f"bad kernel shapes: weights {w}, bias {self.bias.shape}")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def init(cls, size: int, in_ch: int, out_ch: int, rng: np.random.Generator, gain: float = 1.0):
        std = gain / np.sqrt(in_ch * size * size)
        return cls(size, Tensor(rng.normal(0.0, std, (out_ch, in_ch, size, size))), Tensor(np.zeros(out_ch)))


def conv2d_same(x: Tensor, kernel: ConvKernel) -> Tensor:
    """Stride-1 convolution with zero padding that keeps H x W."""
    if x.ndim != 3 or x.shape[0] != kernel.in_channels:
        raise DimensionError(f"conv2d input {x.shape} does not match kernel in_ch={kernel.in_channels}")
    c_in, h, w = x.shape
    s, p = kernel.size, kernel.size // 2
    c_out = kernel.out_channels
    wmat = kernel.weights.data.reshape(c_out, -1)
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p)))
    # windows: [C_in, H, W, s, s] -> columns [H*W, C_in*s*s]
    cols = sliding_window_view(xp, (s, s), axis=(1, 2)).transpose(1, 2, 0, 3, 4).reshape(h * w, -1)
    y = (cols @ wmat.T).T.reshape(c_out, h, w) + kernel.bias.data[:, None, None]
    out = Tensor._wrap_result(y)

    def vjp(g):
        g2 = g.reshape(c_out, h * w)
        gw = (g2 @ cols).reshape(kernel.weights.shape)
        gb = g2.sum(axis=1)
        gcols = (wmat.T @ g2).reshape(c_in, s, s, h, w)
        gxp = np.zeros(xp.shape)
        for i in range(s):
            for j in range(s):
                gxp[:, i : i + h, j : j + w] += gcols[:, i, j]
        return gxp[:, p : p + h, p : p + w], gw, gb

    return _record(out, (x, kernel.weights, kernel.bias), vjp)


def adaptive_max_pool(t: Tensor, out_size: tuple[int, int]) -> Tensor:
    """Reduce the leading axis of a [D x H x W] tensor by max, keeping H x W."""
    if t.ndim != 3:
        raise DimensionError(f"adaptive_max_pool expects rank 3, got shape {t.shape}")
    if tuple(out_size) != t.shape[1:]:
        raise ValueError(f"only same-size pooling is supported: requested {tuple(out_size)}, input {t.shape[1:]}")
    idx = np.argmax(t.data, axis=0)
    out = Tensor._wrap_result(np.take_along_axis(t.data, idx[None], axis=0))

    def vjp(g):
        gt = np.zeros(t.shape)
        np.put_along_axis(gt, idx[None], g, axis=0)
        return (gt,)

    return _record(out, (t,), vjp)


def batchnorm2d(t: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization over H x W with batch statistics, then affine."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if t.ndim != 3 or gamma.shape != (t.shape[0],) or beta.shape != (t.shape[0],):
        raise DimensionError(f"batchnorm2d shapes: input {t.shape}, gamma {gamma.shape}, beta {beta.shape}")
    x = t.data
    n = x.shape[1] * x.shape[2]
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = ((x - mu) ** 2).mean(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    g_, b_ = gamma.data[:, None, None], beta.data[:, None, None]
    out = Tensor._wrap_result(g_ * xhat + b_)

    def vjp(g):
        gxhat = g * g_
        gx = inv_std / n * (
            n * gxhat - gxhat.sum(axis=(1, 2), keepdims=True) - xhat * (gxhat * xhat).sum(axis=(1, 2), keepdims=True)
        )
        return gx, (g * xhat).sum(axis=(1, 2)), g.sum(axis=(1, 2))

    return _record(out, (t, gamma, beta), vjp)


# ---------------------------------------------------------------------------
# sampling


def _corners(coord: np.ndarray, n: int):
    c = np.clip(coord, 0.0, n - 1)
    lo = np.minimum(np.floor(c), max(n - 2, 0)).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    return lo, hi, c - lo


def bilinear_gather(fmap: Tensor, rows: Tensor, cols: Tensor) -> Tensor:
    """Bilinear samples of a [C x H x W] map at P continuous (row, col) points.

    Returns [P x C]. Coordinates outside the grid clamp to the border, where
    the coordinate gradient is zero.
    """
    if fmap.ndim != 3 or rows.shape != cols.shape or rows.ndim != 1:
        raise DimensionError(f"bilinear_gather shapes: map {fmap.shape}, rows {rows.shape}, cols {cols.shape}")
    c, h, w = fmap.shape
    r0, r1, fr = _corners(rows.data, h)
    c0, c1, fc = _corners(cols.data, w)
    m = fmap.data
    v00, v01, v10, v11 = m[:, r0, c0], m[:, r0, c1], m[:, r1, c0], m[:, r1, c1]
    w00, w01, w10, w11 = (1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc
    y = (w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11).T
    out = Tensor._wrap_result(y)
    r_live = (rows.data >= 0) & (rows.data <= h - 1) & (h > 1)
    c_live = (cols.data >= 0) & (cols.data <= w - 1) & (w > 1)

    def vjp(g):
        gt = g.T  # [C, P]
        gm = np.zeros((c, h * w))
        for (ri, ci), wt in (((r0, c0), w00), ((r0, c1), w01), ((r1, c0), w10), ((r1, c1), w11)):
            np.add.at(gm, (slice(None), ri * w + ci), gt * wt)
        d_fr = (1 - fc) * (v10 - v00) + fc * (v11 - v01)
        d_fc = (1 - fr) * (v01 - v00) + fr * (v11 - v10)
        return gm.reshape(c, h, w), (gt * d_fr).sum(axis=0) * r_live, (gt * d_fc).sum(axis=0) * c_live

    return _record(out, (fmap, rows, cols), vjp)


# ---------------------------------------------------------------------------
# parameter trees


def parameters(tree) -> list[Tensor]:
    """All Tensor leaves of nested dataclasses / lists / tuples / dicts, in order."""
    return list(_iter_leaves(tree))


def _iter_leaves(tree) -> Iterator[Tensor]:
    if isinstance(tree, Tensor):
        yield tree
    elif is_dataclass(tree) and not isinstance(tree, type):
        for f in fields(tree):
            yield from _iter_leaves(getattr(tree, f.name))
    elif isinstance(tree, (list, tuple)):
        for item in tree:
            yield from _iter_leaves(item)
    elif isinstance(tree, dict):
        for item in tree.values():
            yield from _iter_leaves(item)


def with_parameters(tree, values: Iterable[Tensor]):
    """Copy of ``tree`` with its Tensor leaves replaced, in :func:`parameters` order."""
    it = iter(values)
    new = _rebuild(tree, it)
    if next(it, None) is not None:
        raise ValueError("more replacement values than parameters")
    return new


def _rebuild(tree, it):
    if isinstance(tree, Tensor):
        try:
            return next(it)
        except StopIteration:
            raise ValueError("fewer replacement values than parameters") from None
    if is_dataclass(tree) and not isinstance(tree, type):
        return replace(tree, **{f.name: _rebuild(getattr(tree, f.name), it) for f in fields(tree) if f.init})
    if isinstance(tree, list):
        return [_rebuild(x, it) for x in tree]
    if isinstance(tree, tuple):
        return tuple(_rebuild(x, it) for x in tree)
    if isinstance(tree, dict):
        return {k: _rebuild(v, it) for k, v in tree.items()}
    return tree


# ---------------------------------------------------------------------------
# TSR1 text format


def dumps_tsr1(t: Tensor) -> str:
    shape = " ".join(str(n) for n in t.shape)
    values = " ".join(repr(float(v)) for v in t.data.reshape(-1))
    return f"TSR1\n{shape}\n{values}\n"


def loads_tsr1(text: str) -> Tensor:
    lines = text.split("\n")
    if len(lines) < 3 or lines[0].strip() != "TSR1":
        raise ValueError("not a TSR1 document")
    shape = tuple(int(s) for s in lines[1].split())
    values = np.array([float(s) for s in lines[2].split()], dtype=np.float64)
    if values.size != int(np.prod(shape)):
        raise DimensionError(f"TSR1 shape {shape} does not match {values.size} values")
    return Tensor(values.reshape(shape))


def write_tsr1(t: Tensor, path) -> None:
    Path(path).write_text(dumps_tsr1(t))


def read_tsr1(path) -> Tensor:
    return loads_tsr1(Path(path).read_text())


@dataclass(frozen=True)
class Linear:
    weight: Tensor  # [K x N]
    bias: Tensor  # [N]

    @classmethod
    def init(cls, k: int, n: int, rng: np.random.Generator, gain: float = 1.0, bias: float | np.ndarray = 0.0):
        w = rng.normal(0.0, gain / np.sqrt(k), (k, n)) if gain else np.zeros((k, n))
        return cls(Tensor(w), Tensor(np.broadcast_to(np.asarray(bias, dtype=np.float64), (n,))))

    def __call__(self, t: Tensor) -> Tensor:
        return linear(t, self.weight, self.bias)
