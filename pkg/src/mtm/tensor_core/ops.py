"""Differentiable operations.

Every function computes its forward value with numpy and, when a tape is
active and an input requires gradients, records a closure mapping the
output gradient to one gradient per input. Broadcasting follows numpy;
gradients are summed back to each input's shape.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import kernels
from .tensor import Tensor, make_result

COSINE_EPS = 1e-8


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(ValueError):
    """Raised when an op that needs finite input receives NaN or Inf."""


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if like is not None:
        return Tensor(x, dtype=like.dtype)
    return Tensor(x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_finite(x: Tensor, opname: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError(f"{opname}: non-finite input")


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data * b.data, (a, b),
                       lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return make_result(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),))


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select from ``a`` where ``cond`` holds, else from ``b``. ``cond`` is constant."""
    a, b = _pair(a, b)
    cond = np.asarray(cond, dtype=bool)
    out = np.where(cond, a.data, b.data)

    def backward(g):
        return (_unbroadcast(np.where(cond, g, 0), a.shape),
                _unbroadcast(np.where(cond, 0, g), b.shape))

    return make_result(out, (a, b), backward)


# linear algebra and reductions

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, batched over leading ones."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2 and a.ndim > 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), backward)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(np.asarray(out), (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a: Tensor, shape) -> Tensor:
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(np.array(out, copy=True), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis`` (the last axis by default)."""
    tensors = [_lift(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
                t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=ax) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return make_result(out, tuple(tensors), backward)


def window_mean(x: Tensor, size: int, axis: int = 1) -> Tensor:
    """Stride-1 mean over ``size`` consecutive entries along ``axis``."""
    n = x.shape[axis]
    if size < 1:
        raise ValueError(f"window size must be >= 1, got {size}")
    if n < size:
        raise ValueError(f"sequence too short: length {n} < window {size}")
    m = n - size + 1
    ax = axis % x.ndim

    def window(arr, k):
        sl = [slice(None)] * arr.ndim
        sl[ax] = slice(k, k + m)
        return tuple(sl)

    out = np.zeros_like(np.take(x.data, np.arange(m), axis=ax))
    for k in range(size):
        out += x.data[window(x.data, k)]
    out /= size

    def backward(g):
        gx = np.zeros_like(x.data)
        gs = g / size
        for k in range(size):
            gx[window(gx, k)] += gs
        return (gx,)

    return make_result(out, (x,), backward)


# similarity

def _norms(x: np.ndarray):
    raw = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    return raw, np.maximum(raw, COSINE_EPS)


def cosine(a, b) -> Tensor:
    """Cosine similarity over the last axis with broadcasting.

    Norms are floored at ``COSINE_EPS`` so two zero vectors give 0.
    """
    a, b = _pair(a, b)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cosine: last dims differ in {a.shape} and {b.shape}")
    ra, na = _norms(a.data)
    rb, nb = _norms(b.data)
    dot = np.sum(a.data * b.data, axis=-1, keepdims=True)
    c = dot / (na * nb)

    def backward(g):
        g = g[..., None]
        scale = g / (na * nb)
        ga = scale * b.data - np.where(ra > COSINE_EPS, g * c / (na * na), 0) * a.data
        gb = scale * a.data - np.where(rb > COSINE_EPS, g * c / (nb * nb), 0) * b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(c[..., 0], (a, b), backward)


def pairwise_cosine(a: Tensor, b: Tensor) -> Tensor:
    """All-pairs cosine: (..., I, H) x (..., J, H) -> (..., I, J)."""
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"pairwise_cosine: last dims differ in {a.shape} and {b.shape}")
    ra, na = _norms(a.data)
    rb, nb = _norms(b.data)
    an = a.data / na
    bn = b.data / nb
    out = np.matmul(an, np.swapaxes(bn, -1, -2))

    def backward(g):
        gan = np.matmul(g, bn)
        gbn = np.matmul(np.swapaxes(g, -1, -2), an)
        ga = (gan - np.where(ra > COSINE_EPS, an * np.sum(gan * an, -1, keepdims=True), 0)) / na
        gb = (gbn - np.where(rb > COSINE_EPS, bn * np.sum(gbn * bn, -1, keepdims=True), 0)) / nb
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), backward)


# probability

def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, shifted by the row max."""
    _check_finite(logits, "softmax")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - np.sum(g * p, axis=-1, keepdims=True)),)

    return make_result(p, (logits,), backward)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    _check_finite(logits, "softmax_cross_entropy")
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity when not training or ``rate == 0``."""
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


# lookup and recurrence

def embedding(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids``; row 0 (PAD) receives no gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"embedding: id out of range [0, {V})")
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        gt[0] = 0
        return (gt,)

    return make_result(out, (table,), backward)


def lstm(x: Tensor, weight: Tensor, bias: Tensor, lengths, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over a right-padded batch.

    ``x`` is (B, T, D), ``weight`` is (D + H, 4H) acting on ``[input; hidden]``,
    ``bias`` is (4H,). Returns hidden states (B, T, H), zero past each length.
    """
    B, T, D = x.shape
    H4 = weight.shape[1]
    H = H4 // 4
    if weight.shape[0] != D + H or H4 != 4 * H:
        raise ShapeError(f"lstm: weight {weight.shape} does not fit input dim {D}")
    lengths = np.asarray(lengths, dtype=np.int64)
    w_x = weight.data[:D]
    w_h = np.ascontiguousarray(weight.data[D:])
    xp = np.ascontiguousarray((x.data.reshape(-1, D) @ w_x + bias.data).reshape(B, T, H4))
    h, c, gates = kernels.lstm_forward(xp, w_h, lengths, reverse)

    def backward(g):
        dz = kernels.lstm_backward(np.ascontiguousarray(g), w_h, lengths, reverse, h, c, gates)
        prev = np.zeros_like(h)
        if reverse:
            prev[:, :-1] = h[:, 1:]
        else:
            prev[:, 1:] = h[:, :-1]
        dz2 = dz.reshape(-1, H4)
        dw = np.concatenate([x.data.reshape(-1, D).T @ dz2, prev.reshape(-1, H).T @ dz2], axis=0)
        db = dz2.sum(axis=0)
        dx = (dz2 @ w_x.T).reshape(B, T, D)
        return dx, dw, db

    return make_result(h, (x, weight, bias), backward)
