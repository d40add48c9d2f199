"""Cosine attention and multi-perspective matching of a comment against one target."""
from __future__ import annotations

import numpy as np

from . import tensor_core as tc
from .encoder import EncodedText
from .tensor_core import Tensor

TARGETS = ("title", "abstract", "surroundings")
SUM_GUARD = 1e-6


def init_perspectives(p: int, hidden: int, rng: np.random.Generator) -> np.ndarray:
    if p < 1:
        raise ValueError(f"number of perspectives must be >= 1, got {p}")
    return rng.uniform(0.5, 1.5, size=(p, hidden))


def _mask(lengths: np.ndarray, width: int, dtype) -> np.ndarray:
    return (np.arange(width)[None, :] < np.asarray(lengths)[:, None]).astype(dtype)


def attention_weights(comment: Tensor, target: Tensor, target_lengths=None) -> Tensor:
    """Cosine between every comment position and every target position.

    (B, I, H) x (B, J, H) -> (B, I, J). Target positions at or past
    ``target_lengths`` get weight 0.
    """
    alpha = tc.pairwise_cosine(comment, target)
    if target_lengths is not None:
        alpha = alpha * _mask(target_lengths, target.shape[1], alpha.dtype)[:, None, :]
    return alpha


def attentive_vector(alpha: Tensor, target: Tensor, target_lengths=None) -> Tensor:
    """Attention-normalised sum of target states for each comment position.

    Where the weights nearly cancel (|sum| < 1e-6) the plain mean of the
    valid target states is used instead.
    """
    B, J = target.shape[0], target.shape[1]
    lengths = np.full(B, J) if target_lengths is None else np.asarray(target_lengths)
    num = tc.matmul(alpha, target)
    den = tc.reduce_sum(alpha, axis=-1, keepdims=True)
    guard = np.abs(den.data) < SUM_GUARD
    safe_den = tc.where(guard, 1.0, den)
    mask = _mask(lengths, J, target.dtype)[:, :, None]
    count = np.maximum(lengths, 1).astype(target.dtype)[:, None, None]
    plain = tc.reduce_sum(target * mask, axis=1, keepdims=True) / count
    return tc.where(np.broadcast_to(guard, num.shape), plain, num / safe_den)


def multi_perspective(v1: Tensor, v2: Tensor, weights: Tensor) -> Tensor:
    """k-th output is cosine(v1 * W_k, v2 * W_k); (..., H) x (p, H) -> (..., p)."""
    a = tc.reshape(v1, v1.shape[:-1] + (1, v1.shape[-1])) * weights
    b = tc.reshape(v2, v2.shape[:-1] + (1, v2.shape[-1])) * weights
    return tc.cosine(a, b)


def absent_match(comment: EncodedText, p: int) -> Tensor:
    """All-zero match sequence standing in for a missing target."""
    B, I = comment.pooled_fwd.shape[0], comment.pooled_fwd.shape[1]
    return Tensor(np.zeros((B, I, 2 * p), dtype=comment.pooled_fwd.dtype))


def match_target(comment: EncodedText, target: EncodedText | None, w_fwd: Tensor, w_bwd: Tensor) -> Tensor:
    """Per comment position, [forward p matches ; backward p matches], (B, I, 2p).

    Rows whose target is absent (length 0, or ``target`` None) are all zero,
    as are positions past the comment's pooled length.
    """
    p = w_fwd.shape[0]
    if target is None or not target.present.any():
        return absent_match(comment, p)
    out = []
    for hc, ht, w in ((comment.pooled_fwd, target.pooled_fwd, w_fwd),
                      (comment.pooled_bwd, target.pooled_bwd, w_bwd)):
        alpha = attention_weights(hc, ht, target.pooled_lengths)
        summed = attentive_vector(alpha, ht, target.pooled_lengths)
        out.append(multi_perspective(hc, summed, w))
    m = tc.concat(out, axis=-1)
    keep = _mask(comment.pooled_lengths, m.shape[1], m.dtype)
    keep = keep * target.present.astype(m.dtype)[:, None]
    return m * keep[:, :, None]
