"""Minimal float64 tensor library with reverse-mode differentiation.

Backs every differentiable computation in the synthesizer: shaped arrays,
a dynamically built graph, and the handful of primitive layers the encoder
and decoder compose (linear, 1-d convolution, layer norm, softmax, sigmoid,
embedding lookup, dropout). Everything is float64 so the finite-difference
gradient checks can run at tight tolerances.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Rng",
    "ShapeMismatch",
    "InvalidProbability",
    "NonFiniteValue",
    "STREAM_INIT",
    "STREAM_DROPOUT",
    "STREAM_DATA",
    "STREAM_BATCH",
    "as_tensor",
    "matmul",
    "transpose",
    "linear",
    "conv1d",
    "layer_norm",
    "softmax_rows",
    "sigmoid",
    "softplus",
    "softplus_inv",
    "embedding",
    "dropout",
    "concat_cols",
    "slice_cols",
    "slice_rows",
    "reshape",
    "mean_pool_rows",
    "abs_",
    "sum_",
    "mean_",
    "grad_check",
    "grad_check_sampled",
]


class ShapeMismatch(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class InvalidProbability(ValueError):
    """Probability argument outside [0, 1)."""


class NonFiniteValue(ArithmeticError):
    """A forward or gradient value is NaN or infinite."""


# Stream ids for the counter-based RNG, so e.g. dropout draws never shift
# when initialization consumes a different number of values.
STREAM_INIT = 0
STREAM_DROPOUT = 1
STREAM_DATA = 2
STREAM_BATCH = 3


class Rng:
    """Deterministic random stream backed by the Philox 4x64 counter-based
    generator. The same (seed, stream) pair yields the same draw sequence on
    every platform; distinct stream ids are statistically independent.
    """

    ALGORITHM = "philox4x64"

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream: int) -> "Rng":
        """Fresh stream derived from the same seed."""
        return Rng(self.seed, stream)

    def normal(self, shape: Sequence[int] | int, std: float = 1.0) -> np.ndarray:
        return self._gen.standard_normal(shape) * std

    def uniform(self, low: float, high: float, shape: Sequence[int] | int | None = None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def random(self, shape: Sequence[int] | int | None = None) -> np.ndarray:
        return self._gen.random(shape)

    def integers(self, low: int, high: int, size: Sequence[int] | int | None = None):
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=size)


class Tensor:
    """Shaped float64 array participating in reverse-mode differentiation.

    Data is immutable by convention once the node is part of a graph; only
    `.grad` accumulates. Gradients flow to nodes with requires_grad, which
    propagates from parents to results.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = ()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed=None) -> None:
        """Reverse-mode sweep from this node; each node is visited exactly
        once in reverse topological order. Leaf gradients accumulate, so
        callers zero them between optimization steps.
        """
        if seed is None:
            seed = np.ones_like(self.data)
        else:
            seed = np.broadcast_to(np.asarray(seed, dtype=np.float64), self.data.shape)

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        self._accum(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; constants wrap as untracked tensors.
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


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.data.shape))

    out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    out._backward = _bw
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out._backward = _bw
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad, (a, b))

    def _bw(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    out._backward = _bw
    return out


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose expects a 2-d tensor, got {a.data.shape}")
    out = Tensor(a.data.T.copy(), a.requires_grad, (a,))

    def _bw(g):
        if a.requires_grad:
            a._accum(g.T)

    out._backward = _bw
    return out


def linear(x, w, b=None) -> Tensor:
    """x[T x C_in] @ w[C_in x C_out] (+ b[C_out])."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def conv1d(x, w, b=None) -> Tensor:
    """Non-causal 1-d convolution over the leading (time) axis.

    x is [T x C_in], w is [k x C_in x C_out] with odd k, and borders are
    zero-filled so the output keeps length T ("same" padding).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ShapeMismatch(f"conv1d expects x[TxC] and w[kxCxC'], got {x.data.shape}, {w.data.shape}")
    k, c_in, c_out = w.data.shape
    if k % 2 == 0:
        raise ShapeMismatch(f"kernel width must be odd for same padding, got {k}")
    if x.data.shape[1] != c_in:
        raise ShapeMismatch(f"input has {x.data.shape[1]} channels, kernel expects {c_in}")

    t = x.data.shape[0]
    half = k // 2
    y = np.zeros((t, c_out))
    for tap in range(k):
        s = tap - half
        lo, hi = max(0, -s), t - max(0, s)
        if lo < hi:
            y[lo:hi] += x.data[lo + s:hi + s] @ w.data[tap]

    requires = x.requires_grad or w.requires_grad or (b is not None and as_tensor(b).requires_grad)
    parents = (x, w) if b is None else (x, w, as_tensor(b))
    if b is not None:
        bt = parents[2]
        if bt.data.shape != (c_out,):
            raise ShapeMismatch(f"bias shape {bt.data.shape} does not match {c_out} output channels")
        y = y + bt.data
    out = Tensor(y, requires, parents)

    def _bw(g):
        for tap in range(k):
            s = tap - half
            lo, hi = max(0, -s), t - max(0, s)
            if lo >= hi:
                continue
            if w.requires_grad:
                if w.grad is None:
                    w.grad = np.zeros_like(w.data)
                w.grad[tap] += x.data[lo + s:hi + s].T @ g[lo:hi]
            if x.requires_grad:
                if x.grad is None:
                    x.grad = np.zeros_like(x.data)
                x.grad[lo + s:hi + s] += g[lo:hi] @ w.data[tap].T
        if b is not None and parents[2].requires_grad:
            parents[2]._accum(g.sum(axis=0))

    out._backward = _bw
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Per-row normalization to mean 0 / variance 1 (population), then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.data.ndim != 2:
        raise ShapeMismatch(f"layer_norm expects a 2-d tensor, got {x.data.shape}")
    c = x.data.shape[1]
    if gain.data.shape != (c,) or bias.data.shape != (c,):
        raise ShapeMismatch("gain/bias must match the channel extent")

    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor(xhat * gain.data + bias.data,
                 x.requires_grad or gain.requires_grad or bias.requires_grad,
                 (x, gain, bias))

    def _bw(g):
        if gain.requires_grad:
            gain._accum((g * xhat).sum(axis=0))
        if bias.requires_grad:
            bias._accum(g.sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            x._accum(inv_std * (gx
                                - gx.mean(axis=1, keepdims=True)
                                - xhat * (gx * xhat).mean(axis=1, keepdims=True)))

    out._backward = _bw
    return out


def softmax_rows(x) -> Tensor:
    """Row-wise softmax with per-row max subtraction for stability."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeMismatch(f"softmax_rows expects a 2-d tensor, got {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p, x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(p * (g - (g * p).sum(axis=1, keepdims=True)))

    out._backward = _bw
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = np.empty_like(x.data)
    pos = x.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s, x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(g * s * (1.0 - s))

    out._backward = _bw
    return out


def softplus(x) -> Tensor:
    """log(1 + e^x), computed stably; used to keep learned scales positive."""
    x = as_tensor(x)
    y = np.logaddexp(0.0, x.data)
    out = Tensor(y, x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            s = np.empty_like(x.data)
            pos = x.data >= 0
            s[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
            ex = np.exp(x.data[~pos])
            s[~pos] = ex / (1.0 + ex)
            x._accum(g * s)

    out._backward = _bw
    return out


def softplus_inv(y: float) -> float:
    """Scalar inverse of softplus: log(e^y - 1), stable for large y via
    log(e^y - 1) = y + log(1 - e^-y)."""
    if y <= 0:
        raise ValueError("softplus output must be positive")
    if y > 20.0:
        return float(y + np.log1p(-np.exp(-y)))
    return float(np.log(np.expm1(y)))


def embedding(table, ids) -> Tensor:
    """Row gather: out[i] = table[ids[i]]. Also serves as the differentiable
    state-repetition step when `table` is an encoder output."""
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2 or idx.ndim != 1:
        raise ShapeMismatch("embedding expects a 2-d table and a 1-d index vector")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeMismatch("index out of range for embedding table")
    out = Tensor(table.data[idx], table.requires_grad, (table,))

    def _bw(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, g)

    out._backward = _bw
    return out


def dropout(x, p: float, mode: str, rng: Rng | None) -> Tensor:
    """Inverted dropout: train mode zeroes with probability p and rescales
    survivors by 1/(1-p); eval mode (and p == 0) is the identity."""
    if not 0.0 <= p < 1.0:
        raise InvalidProbability(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if mode == "eval" or p == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an Rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask, x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(g * mask)

    out._backward = _bw
    return out


def concat_cols(parts: Iterable) -> Tensor:
    """Column-wise concatenation of 2-d tensors with equal row counts."""
    ts = [as_tensor(p) for p in parts]
    rows = {t.data.shape[0] for t in ts}
    if len(rows) != 1:
        raise ShapeMismatch(f"row counts differ: {sorted(rows)}")
    widths = [t.data.shape[1] for t in ts]
    out = Tensor(np.concatenate([t.data for t in ts], axis=1),
                 any(t.requires_grad for t in ts), tuple(ts))

    def _bw(g):
        offset = 0
        for t, w in zip(ts, widths):
            if t.requires_grad:
                t._accum(g[:, offset:offset + w])
            offset += w

    out._backward = _bw
    return out


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data[:, start:stop].copy(), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, start:stop] += g

    out._backward = _bw
    return out


def slice_rows(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data[start:stop].copy(), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[start:stop] += g

    out._backward = _bw
    return out


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape).copy(), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(g.reshape(x.data.shape))

    out._backward = _bw
    return out


def mean_pool_rows(x, r: int) -> Tensor:
    """Average consecutive groups of r rows; a short tail is padded by
    repeating the last row, so T maps to ceil(T/r) rows."""
    x = as_tensor(x)
    if r < 1:
        raise ValueError(f"pool factor must be >= 1, got {r}")
    if x.data.ndim != 2:
        raise ShapeMismatch(f"mean_pool_rows expects a 2-d tensor, got {x.data.shape}")
    if r == 1:
        return x
    t, c = x.data.shape
    t_out = -(-t // r)
    pad = t_out * r - t
    padded = np.concatenate([x.data, np.repeat(x.data[-1:], pad, axis=0)], axis=0) if pad else x.data
    out = Tensor(padded.reshape(t_out, r, c).mean(axis=1), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            full = np.repeat(g / r, r, axis=0)
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad += full[:t]
            if pad:
                x.grad[-1] += full[t:].sum(axis=0)

    out._backward = _bw
    return out


def abs_(x) -> Tensor:
    """Elementwise |x| with subgradient 0 at 0."""
    x = as_tensor(x)
    out = Tensor(np.abs(x.data), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(g * np.sign(x.data))

    out._backward = _bw
    return out


def sum_(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.sum(), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(np.full_like(x.data, float(g)))

    out._backward = _bw
    return out


def mean_(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    out = Tensor(x.data.mean(), x.requires_grad, (x,))

    def _bw(g):
        if x.requires_grad:
            x._accum(np.full_like(x.data, float(g) / n))

    out._backward = _bw
    return out


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{what} contains non-finite values")


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5) -> float:
    """Compare reverse-mode gradients of the scalar graph f() against central
    finite differences, coordinate by coordinate.

    Returns the worst relative error, |analytic - numeric| scaled by
    max(|analytic|, |numeric|, 1). f must rebuild its graph on each call and
    be deterministic (dropout off).
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ShapeMismatch("grad_check needs a scalar-valued graph")
    _check_finite(out.data, "graph output")
    out.backward()

    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * step)
        _check_finite(numeric, "finite-difference estimate")
        _check_finite(analytic, "analytic gradient")
        num = numeric.reshape(p.data.shape)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(num)), 1.0)
        worst = max(worst, float((np.abs(analytic - num) / denom).max()))
    return worst


def grad_check_sampled(f: Callable[[], Tensor], params: Sequence[Tensor],
                       step: float = 1e-5, max_coords: int = 200,
                       rng: Rng | None = None) -> float:
    """grad_check over a random subsample of coordinates, for graphs too
    large to difference exhaustively. Samples roughly evenly across params
    up to max_coords total."""
    rng = rng or Rng(0, STREAM_DATA)
    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ShapeMismatch("grad_check needs a scalar-valued graph")
    _check_finite(out.data, "graph output")
    out.backward()

    total = sum(p.data.size for p in params)
    worst = 0.0
    for p in params:
        share = max(1, round(max_coords * p.data.size / total))
        count = min(share, p.data.size)
        coords = rng.integers(0, p.data.size, size=count) if count < p.data.size \
            else np.arange(p.data.size)
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in np.unique(coords):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            if not math.isfinite(numeric):
                raise NonFiniteValue("finite-difference estimate is non-finite")
            denom = max(abs(aflat[i]), abs(numeric), 1.0)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
