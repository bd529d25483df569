"""Dense float64 tensors with a reverse-mode differentiation tape.

Every array in the library is a :class:`Tensor`: a numpy float64 buffer plus
an optional gradient slot.  Operations are free functions; whenever an input
requires gradients the operation appends a backward rule to the active
:class:`Tape`, and :func:`backward` replays the tape in reverse to populate
``grad`` on every reachable tensor that requires it.

Conventions used throughout:

* token features are ``[N, C]`` (row per position, channel last),
* image-like maps are ``[H, W, C]``,
* randomness comes exclusively from the splitmix64 :class:`Rng`, which is
  bit-exact across platforms.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, fields, is_dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor", "Tape", "Rng", "SparseMask",
    "backward", "reset_tape", "active_tape",
    "add", "sub", "neg", "mul", "div", "scale", "add_scalar",
    "matmul", "transpose", "permute", "reshape", "concat",
    "sum_all", "mean_all", "sigmoid", "gelu", "log", "clamp",
    "softmax", "masked_softmax", "linear", "layer_norm",
    "topk_indices", "topk_mask", "gather_rows", "scatter_mean",
    "patchify", "avgpool_grid", "upsample_x2", "depthwise_conv5x5",
    "xavier_uniform", "zeros", "ones",
    "Linear", "LayerNorm", "FeedForward", "named_parameters", "sgd_step",
]

_U64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Rng:
    """splitmix64 stream; the same seed yields a bit-identical sequence.

    ``next_f64`` maps the top 53 bits of each output word onto [0, 1).
    ``uniform`` draws a whole array from the same stream (the state advances
    exactly as if ``next_f64`` had been called element by element, in C
    order), so scalar and vectorised draws are interchangeable.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _U64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _U64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _U64
        z = ((z ^ (z >> 27)) * _MIX2) & _U64
        return z ^ (z >> 31)

    def next_f64(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self.state) + steps * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GOLDEN) & _U64
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return (low + (high - low) * u).reshape(shape)

    def split(self) -> "Rng":
        """Derive an independent child stream (for per-trial seeding)."""
        return Rng(self.next_u64())


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

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
        return float(self.data.reshape(-1)[0])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def require_finite(self, what: str = "tensor") -> "Tensor":
        if not self.is_finite():
            raise ValueError(f"{what} contains NaN or Inf")
        return self

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, float(other))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, -float(other))
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


# --------------------------------------------------------------------------
# tape

class _Entry:
    __slots__ = ("inputs", "output", "rule")

    def __init__(self, inputs, output, rule):
        self.inputs = inputs
        self.output = output
        self.rule = rule


class Tape:
    """Ordered record of differentiable operations.

    Entries are appended in execution order, so every input of an entry was
    produced before the entry itself; ``backward`` walks the list in reverse
    and accumulates gradients.  A tape is single-threaded.  Used as a context
    manager it becomes the active tape for the enclosed block.
    """

    def __init__(self):
        self.entries: list[_Entry] = []
        self._by_output: dict[int, int] = {}

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, rule) -> None:
        self._by_output[id(output)] = len(self.entries)
        self.entries.append(_Entry(inputs, output, rule))

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError("loss must be a scalar tensor")
        idx = self._by_output.get(id(loss))
        if idx is None:
            raise ValueError("loss is not on the active tape")
        # id -> (tensor ref, accumulated gradient); holding the ref keeps ids stable
        grads: dict[int, tuple[Tensor, np.ndarray]] = {
            id(loss): (loss, np.ones_like(loss.data))
        }
        for entry in reversed(self.entries[: idx + 1]):
            got = grads.get(id(entry.output))
            if got is None:
                continue
            for t, g in zip(entry.inputs, entry.rule(got[1])):
                if g is None:
                    continue
                cur = grads.get(id(t))
                grads[id(t)] = (t, g if cur is None else cur[1] + g)
        for t, g in grads.values():
            if t.requires_grad:
                t.grad = np.asarray(g, dtype=np.float64).reshape(t.shape)


_TLS = threading.local()


def _stack() -> list[Tape]:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = [Tape()]
        _TLS.stack = stack
    return stack


def active_tape() -> Tape:
    return _stack()[-1]


def reset_tape() -> Tape:
    """Replace the active tape with a fresh one and return it."""
    stack = _stack()
    stack[-1] = Tape()
    return stack[-1]


def backward(loss: Tensor) -> None:
    active_tape().backward(loss)


def _emit(inputs: tuple[Tensor, ...], data: np.ndarray,
          rule: Callable[[np.ndarray], tuple]) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=req)
    if req:
        active_tape().record(inputs, out, rule)
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --------------------------------------------------------------------------
# elementwise and reductions

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _emit((a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _emit((a, b), a.data - b.data, lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return _emit((a,), -a.data, lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit((a, b), ad * bd, lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "div")
    ad, bd = a.data, b.data
    return _emit((a, b), ad / bd, lambda g: (g / bd, -g * ad / (bd * bd)))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _emit((a,), a.data * s, lambda g: (g * s,))


def add_scalar(a: Tensor, s: float) -> Tensor:
    return _emit((a,), a.data + float(s), lambda g: (g,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit((a,), np.asarray(a.data.sum()),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    shape = a.shape
    return _emit((a,), np.asarray(a.data.mean()),
                 lambda g: (np.broadcast_to(g / n, shape).copy(),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _emit((a,), out, lambda g: (g * out * (1.0 - out),))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def rule(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    return _emit((a,), out, rule)


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise ValueError("log: requires strictly positive input")
    return _emit((a,), np.log(x), lambda g: (g / x,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.data
    out = np.clip(x, lo, hi)
    inside = (x > lo) & (x < hi)
    return _emit((a,), out, lambda g: (g * inside,))


# --------------------------------------------------------------------------
# shape movement

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError("matmul: operands must have at least 2 dimensions")
    if ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul: inner dims differ {ad.shape} vs {bd.shape}")
    if ad.ndim > 2 and bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ValueError("matmul: batch dims must match exactly")
    out = ad @ bd

    def rule(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        while ga.ndim > ad.ndim:
            ga = ga.sum(axis=0)
        while gb.ndim > bd.ndim:
            gb = gb.sum(axis=0)
        return ga, gb

    return _emit((a, b), out, rule)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ValueError("transpose: needs at least 2 dimensions")
    return _emit((a,), np.swapaxes(a.data, -1, -2),
                 lambda g: (np.swapaxes(g, -1, -2),))


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit((a,), np.transpose(a.data, axes),
                 lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old = a.shape
    return _emit((a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ValueError("concat: needs at least one tensor")
    sizes = [t.shape[axis] for t in parts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in parts], axis=axis)
    return _emit(parts, out, lambda g: tuple(np.split(g, splits, axis=axis)))


# --------------------------------------------------------------------------
# attention pieces

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _emit((a,), y, rule)


class SparseMask:
    """Per-row candidate column sets over a fixed number of columns.

    Rows are stored as sorted, de-duplicated int64 index arrays.  A mask both
    restricts attention (candidate neighborhoods) and represents top-k
    selections.
    """

    __slots__ = ("rows", "ncols")

    def __init__(self, rows: Iterable, ncols: int):
        ncols = int(ncols)
        canon = []
        for r in rows:
            arr = np.unique(np.asarray(r, dtype=np.int64))
            if arr.size and (arr[0] < 0 or arr[-1] >= ncols):
                raise ValueError("SparseMask: index out of range")
            canon.append(arr)
        self.rows = canon
        self.ncols = ncols

    @property
    def nrows(self) -> int:
        return len(self.rows)

    def row_sizes(self) -> np.ndarray:
        return np.array([r.size for r in self.rows], dtype=np.int64)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.nrows, self.ncols), dtype=bool)
        for i, r in enumerate(self.rows):
            dense[i, r] = True
        return dense

    @classmethod
    def full(cls, nrows: int, ncols: int) -> "SparseMask":
        return cls([np.arange(ncols)] * nrows, ncols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMask):
            return NotImplemented
        return (self.ncols == other.ncols and self.nrows == other.nrows
                and all(np.array_equal(a, b) for a, b in zip(self.rows, other.rows)))

    def __repr__(self) -> str:
        return f"SparseMask(nrows={self.nrows}, ncols={self.ncols})"


def masked_softmax(a: Tensor, mask: SparseMask, axis: int = 1) -> Tensor:
    """Row-wise softmax restricted to the mask's candidate sets.

    Positions outside the mask are exactly zero in the output.  ``axis`` is
    the axis the normalisation runs over; the mask has one candidate set per
    row of the *other* axis.  Only 2-D inputs are supported.
    """
    if a.ndim != 2:
        raise ValueError("masked_softmax: input must be 2-D")
    if axis not in (0, 1, -1):
        raise ValueError("masked_softmax: axis must be 0 or 1 for 2-D input")
    flip = axis == 0
    x = a.data.T if flip else a.data
    if mask.nrows != x.shape[0] or mask.ncols != x.shape[1]:
        raise ValueError("masked_softmax: mask shape does not match input")
    if any(r.size == 0 for r in mask.rows):
        raise ValueError("masked_softmax: empty candidate row")
    dense = mask.to_dense()
    z = np.where(dense, x, -np.inf)
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)          # exact 0.0 outside the mask
    y = e / e.sum(axis=1, keepdims=True)
    out = y.T if flip else y

    def rule(g):
        gy = g.T if flip else g
        dot = (gy * y).sum(axis=1, keepdims=True)
        gx = y * (gy - dot)    # zero outside the mask because y is
        return (gx.T if flip else gx,)

    return _emit((a,), out, rule)


def topk_indices(a, k: int, within: SparseMask | None = None) -> list[np.ndarray]:
    """Per-row indices of the k largest entries, in descending value order.

    Ties are resolved toward the smaller column index.  With a ``within``
    mask only candidate columns compete; rows holding fewer than k candidates
    return all of them (a short row).  Selection is not differentiated.
    """
    if k <= 0:
        raise ValueError("topk_indices: k must be positive")
    x = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("topk_indices: input must be 2-D")
    if within is not None and (within.nrows != x.shape[0] or within.ncols != x.shape[1]):
        raise ValueError("topk_indices: mask shape does not match input")
    out = []
    for i in range(x.shape[0]):
        cand = within.rows[i] if within is not None else np.arange(x.shape[1])
        vals = x[i, cand]
        # stable sort on negated values keeps ascending index among ties
        order = np.argsort(-vals, kind="stable")[:k]
        out.append(cand[order])
    return out


def topk_mask(a, k: int, within: SparseMask | None = None) -> SparseMask:
    x = a.data if isinstance(a, Tensor) else np.asarray(a)
    return SparseMask(topk_indices(a, k, within), x.shape[1])


def gather_rows(src: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of an [N, C] tensor into [M, k, C] per an [M, k] index grid."""
    idx = np.asarray(idx)
    if idx.ndim != 2 or not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("gather_rows: idx must be a 2-D integer array")
    n, c = src.shape
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("gather_rows: index out of range")
    out = src.data[idx]

    def rule(g):
        gs = np.zeros((n, c))
        np.add.at(gs, idx.reshape(-1), g.reshape(-1, c))
        return (gs,)

    return _emit((src,), out, rule)


def scatter_mean(n_rows: int, values: Tensor, idx: np.ndarray) -> Tensor:
    """Scatter [M, k, C] values back to [n_rows, C] destination rows.

    Rows hit more than once receive the mean of their contributions; rows
    never hit stay exactly zero.
    """
    idx = np.asarray(idx)
    if values.ndim != 3 or idx.shape != values.shape[:2]:
        raise ValueError("scatter_mean: idx must index the leading [M, k] axes")
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise ValueError("scatter_mean: index out of range")
    c = values.shape[2]
    flat_idx = idx.reshape(-1)
    counts = np.zeros(n_rows)
    np.add.at(counts, flat_idx, 1.0)
    sums = np.zeros((n_rows, c))
    np.add.at(sums, flat_idx, values.data.reshape(-1, c))
    denom = np.maximum(counts, 1.0)[:, None]
    out = sums / denom

    def rule(g):
        return ((g / denom)[idx],)

    return _emit((values,), out, rule)


# --------------------------------------------------------------------------
# dense layers

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ValueError("linear: input must be 2-D [rows, in]")
    xd, wd = x.data, w.data
    out = xd @ wd + b.data

    def rule(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return _emit((x, w, b), out, rule)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last (channel) axis with population variance."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = ((xd - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = xhat * gamma.data + beta.data

    def rule(g):
        reduce_axes = tuple(range(xd.ndim - 1))
        ggamma = (g * xhat).sum(axis=reduce_axes)
        gbeta = g.sum(axis=reduce_axes)
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, ggamma, gbeta

    return _emit((x, gamma, beta), out, rule)


# --------------------------------------------------------------------------
# spatial kernels (maps are [H, W, C])

def patchify(x: Tensor, stride: int) -> Tensor:
    """Rearrange [H, W, C] into non-overlapping stride x stride patches.

    Output is [(H/s)*(W/s), s*s*C] with patches in row-major cell order and
    (dy, dx, channel) feature order, so a strided convolution is just
    ``linear(patchify(x, s), w, b)``.
    """
    h, w, c = x.shape
    s = int(stride)
    if h % s or w % s:
        raise ValueError(f"patchify: stride {s} must divide map sides {h}x{w}")
    gh, gw = h // s, w // s

    def fwd(arr):
        return (arr.reshape(gh, s, gw, s, c)
                   .transpose(0, 2, 1, 3, 4)
                   .reshape(gh * gw, s * s * c))

    def rule(g):
        back = (g.reshape(gh, gw, s, s, c)
                 .transpose(0, 2, 1, 3, 4)
                 .reshape(h, w, c))
        return (back,)

    return _emit((x,), fwd(x.data), rule)


def avgpool_grid(x: Tensor, cell: int) -> Tensor:
    """Mean over non-overlapping cell x cell blocks: [H, W, C] -> [M, C]."""
    h, w, c = x.shape
    p = int(cell)
    if h % p or w % p:
        raise ValueError(f"avgpool_grid: cell {p} must divide map sides {h}x{w}")
    gh, gw = h // p, w // p
    out = x.data.reshape(gh, p, gw, p, c).mean(axis=(1, 3)).reshape(gh * gw, c)

    def rule(g):
        spread = np.broadcast_to(
            g.reshape(gh, 1, gw, 1, c) / (p * p), (gh, p, gw, p, c))
        return (spread.reshape(h, w, c),)

    return _emit((x,), out, rule)


def _upsample_axis_weights(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # output i samples source coordinate i/2 - 0.25, clamped to the map
    src = np.clip(np.arange(2 * n) * 0.5 - 0.25, 0.0, n - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    w1 = src - i0
    return i0, i1, w1


def upsample_x2(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling of an [H, W, C] map (half-pixel centres)."""
    h, w, _ = x.shape
    r0, r1, rw = _upsample_axis_weights(h)
    c0, c1, cw = _upsample_axis_weights(w)
    rw_ = rw[:, None, None]
    cw_ = cw[None, :, None]

    def fwd(arr):
        rows = arr[r0] * (1.0 - rw_) + arr[r1] * rw_
        return rows[:, c0] * (1.0 - cw_) + rows[:, c1] * cw_

    def rule(g):
        grows = np.zeros((2 * h, w, x.shape[2]))
        np.add.at(grows.transpose(1, 0, 2), c0, (g * (1.0 - cw_)).transpose(1, 0, 2))
        np.add.at(grows.transpose(1, 0, 2), c1, (g * cw_).transpose(1, 0, 2))
        gx = np.zeros(x.shape)
        np.add.at(gx, r0, grows * (1.0 - rw_))
        np.add.at(gx, r1, grows * rw_)
        return (gx,)

    return _emit((x,), fwd(x.data), rule)


def depthwise_conv5x5(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel 5x5 cross-correlation with zero padding 2.

    ``kernel`` is [5, 5, C]; the spatial size is preserved.
    """
    h, w, c = x.shape
    if kernel.shape != (5, 5, c):
        raise ValueError(f"depthwise_conv5x5: kernel must be (5, 5, {c})")
    kd = kernel.data
    xp = np.pad(x.data, ((2, 2), (2, 2), (0, 0)))
    out = np.zeros_like(x.data)
    for a in range(5):
        for b in range(5):
            out += xp[a:a + h, b:b + w, :] * kd[a, b, :]

    def rule(g):
        gk = np.empty_like(kd)
        gxp = np.zeros_like(xp)
        for a in range(5):
            for b in range(5):
                gk[a, b, :] = (g * xp[a:a + h, b:b + w, :]).sum(axis=(0, 1))
                gxp[a:a + h, b:b + w, :] += g * kd[a, b, :]
        return gxp[2:2 + h, 2:2 + w, :], gk

    return _emit((x, kernel), out, rule)


# --------------------------------------------------------------------------
# parameter containers

def xavier_uniform(rng: Rng, n_in: int, n_out: int) -> Tensor:
    bound = math.sqrt(6.0 / (n_in + n_out))
    return Tensor(rng.uniform((n_in, n_out), -bound, bound), requires_grad=True)


@dataclass
class Linear:
    w: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: Rng, n_in: int, n_out: int) -> "Linear":
        return cls(w=xavier_uniform(rng, n_in, n_out),
                   b=zeros(n_out, requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w, self.b)


@dataclass
class LayerNorm:
    gamma: Tensor
    beta: Tensor

    @classmethod
    def init(cls, c: int) -> "LayerNorm":
        return cls(gamma=ones(c, requires_grad=True),
                   beta=zeros(c, requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


@dataclass
class FeedForward:
    """Two-layer position-wise feed-forward block with a GELU in between."""

    fc1: Linear
    fc2: Linear

    @classmethod
    def init(cls, rng: Rng, c: int, expansion: int = 4) -> "FeedForward":
        return cls(fc1=Linear.init(rng, c, expansion * c),
                   fc2=Linear.init(rng, expansion * c, c))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


def named_parameters(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Walk dataclasses / sequences / dicts and yield (path, Tensor) leaves.

    Field order is declaration order, so traversal is deterministic.
    """
    if isinstance(obj, Tensor):
        yield prefix or "param", obj
    elif is_dataclass(obj) and not isinstance(obj, type):
        for f in fields(obj):
            sub = getattr(obj, f.name)
            yield from named_parameters(sub, f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(obj, (list, tuple)):
        for i, sub in enumerate(obj):
            yield from named_parameters(sub, f"{prefix}[{i}]")
    elif isinstance(obj, dict):
        for k, sub in obj.items():
            yield from named_parameters(sub, f"{prefix}[{k}]")


def sgd_step(params, lr: float) -> None:
    """In-place gradient-descent update over every parameter with a grad."""
    for _, p in named_parameters(params):
        if p.requires_grad and p.grad is not None:
            p.data = p.data - lr * p.grad
