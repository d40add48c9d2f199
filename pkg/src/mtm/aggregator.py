"""Combination of informativeness, consistency and novelty, and the output classifier."""
from __future__ import annotations

import numpy as np

from . import tensor_core as tc
from .encoder import EncodedText, bilstm
from .tensor_core import Tensor


def informativeness(comment: EncodedText) -> Tensor:
    """Mean over valid positions of the raw [forward ; backward] states, (B, 2H)."""
    states = tc.concat([comment.fwd, comment.bwd], axis=-1)
    lengths = np.maximum(comment.lengths, 1).astype(states.dtype)
    return tc.reduce_sum(states, axis=1) / lengths[:, None]


def aggregate_match(match: Tensor, lengths: np.ndarray, params: dict) -> Tensor:
    """Run the aggregation Bi-LSTM; return [last forward state ; first backward state]."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if (lengths < 1).any():
        raise ValueError("aggregate_match needs at least one matching step per row")
    fwd, bwd = bilstm(match, lengths, params, "aggregator")
    rows = np.arange(match.shape[0])
    return tc.concat([fwd[rows, lengths - 1], bwd[:, 0]], axis=-1)


def combine(r_info: Tensor, rt: Tensor, ra: Tensor, rc: Tensor) -> Tensor:
    """R = [R_info ; rt ; ra ; rc]."""
    if not (rt.shape[-1] == ra.shape[-1] == rc.shape[-1]):
        raise tc.ShapeError(f"combine: aggregate dims differ: {rt.shape}, {ra.shape}, {rc.shape}")
    if len({t.shape[:-1] for t in (r_info, rt, ra, rc)}) != 1:
        raise tc.ShapeError("combine: batch dims differ")
    return tc.concat([r_info, rt, ra, rc], axis=-1)


def init_classifier(in_dim: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    out = {}
    dims = [in_dim, hidden, hidden, 2]
    for k in range(3):
        bound = np.sqrt(6.0 / (dims[k] + dims[k + 1]))
        out[f"classifier.W{k + 1}"] = rng.uniform(-bound, bound, size=(dims[k], dims[k + 1]))
        out[f"classifier.b{k + 1}"] = np.zeros(dims[k + 1])
    return out


def classifier_logits(R: Tensor, params: dict, dropout: float = 0.0,
                      rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Three affine layers, tanh after the first two, dropout on R and both hidden layers."""
    x = tc.dropout(R, dropout, rng, training)
    for k in (1, 2):
        x = tc.tanh(x @ params[f"classifier.W{k}"] + params[f"classifier.b{k}"])
        x = tc.dropout(x, dropout, rng, training)
    return x @ params["classifier.W3"] + params["classifier.b3"]


def classify(R: Tensor, params: dict, dropout: float = 0.0,
             rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
    """Class probabilities (B, 2), column 1 is HIGH."""
    return tc.softmax(classifier_logits(R, params, dropout, rng, training))
