"""Word embeddings, bidirectional LSTM encoding and overlapping mean pooling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_core as tc
from .corpus import PAD, Vocabulary
from .tensor_core import Tensor

EMB_HEADER = "mtm-emb-v1"


@dataclass
class EncodedText:
    """Per-direction states of a right-padded batch of texts.

    ``fwd``/``bwd`` are (B, T, H) raw states, zero past ``lengths``.
    ``pooled_fwd``/``pooled_bwd`` are (B, T - ps + 1, H), valid below
    ``pooled_lengths``. Rows with length 0 are absent texts.
    """

    fwd: Tensor
    bwd: Tensor
    lengths: np.ndarray
    pooled_fwd: Tensor
    pooled_bwd: Tensor
    pooled_lengths: np.ndarray
    ps: int

    @property
    def present(self) -> np.ndarray:
        return self.lengths > 0


def init_embedding(vocab_size: int, dim: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    table = rng.normal(0.0, scale, size=(vocab_size, dim))
    table[PAD] = 0.0
    return table


def init_lstm(in_dim: int, hidden: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Weight over [input; hidden] uniform in +-1/sqrt(H), forget-gate bias 1."""
    bound = 1.0 / np.sqrt(hidden)
    w = rng.uniform(-bound, bound, size=(in_dim + hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return w, b


def load_pretrained(path, vocab: Vocabulary, table: np.ndarray) -> int:
    """Overwrite rows of ``table`` for tokens found in an ``mtm-emb-v1`` file.

    Returns the number of rows replaced.
    """
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 3 or head[0] != EMB_HEADER:
            raise ValueError(f"{path}: expected header '{EMB_HEADER} V d'")
        n, d = int(head[1]), int(head[2])
        if d != table.shape[1]:
            raise ValueError(f"{path}: embedding dim {d} does not match model dim {table.shape[1]}")
        hits = 0
        for lineno in range(n):
            parts = fh.readline().rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise ValueError(f"{path}: line {lineno + 2} has {len(parts) - 1} values, expected {d}")
            idx = vocab.stoi.get(parts[0])
            if idx is not None and idx != PAD:
                table[idx] = np.asarray(parts[1:], dtype=np.float64)
                hits += 1
    return hits


def embed(ids: np.ndarray, table: Tensor) -> Tensor:
    """(B, T) ids -> (B, T, d); PAD rows of the table stay zero."""
    return tc.embedding(table, ids)


def bilstm(x: Tensor, lengths: np.ndarray, params: dict, prefix: str) -> tuple[Tensor, Tensor]:
    fwd = tc.lstm(x, params[f"{prefix}.fwd.W"], params[f"{prefix}.fwd.b"], lengths, reverse=False)
    bwd = tc.lstm(x, params[f"{prefix}.bwd.W"], params[f"{prefix}.bwd.b"], lengths, reverse=True)
    return fwd, bwd


def mean_pool(fwd: Tensor, bwd: Tensor, ps: int) -> tuple[Tensor, Tensor]:
    """Average each run of ``ps`` adjacent states, stride 1.

    Both directions pool the same token span, so position i of either
    output covers tokens i .. i + ps - 1.
    """
    if ps < 1:
        raise ValueError(f"pooling size must be >= 1, got {ps}")
    if ps == 1:
        return fwd, bwd
    L = fwd.shape[1]
    if L < ps:
        raise ValueError(f"sequence too short for pooling: L={L} < ps={ps}")
    return tc.window_mean(fwd, ps, axis=1), tc.window_mean(bwd, ps, axis=1)


def encode(ids: np.ndarray, lengths: np.ndarray, params: dict, ps: int) -> EncodedText:
    """Embed, run the shared encoder Bi-LSTM and pool one batch of texts."""
    lengths = np.asarray(lengths, dtype=np.int64)
    short = lengths[(lengths > 0) & (lengths < ps)]
    if short.size:
        raise ValueError(f"sequence too short for pooling: L={int(short.min())} < ps={ps}")
    x = embed(ids, params["embedding"])
    fwd, bwd = bilstm(x, lengths, params, "encoder")
    pf, pb = mean_pool(fwd, bwd, ps)
    pooled_lengths = np.maximum(lengths - ps + 1, 0)
    return EncodedText(fwd, bwd, lengths, pf, pb, pooled_lengths, ps)
