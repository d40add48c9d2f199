"""The full multi-target matching network: parameters, batching and forward pass."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import tensor_core as tc
from .aggregator import aggregate_match, classifier_logits, combine, informativeness, init_classifier
from .corpus import PAD, SEP, TrainingInstance, Vocabulary
from .encoder import EncodedText, encode, init_embedding, init_lstm
from .matcher import TARGETS, absent_match, init_perspectives, match_target
from .tensor_core import Tensor


@dataclass
class ModelConfig:
    emb_dim: int = 200
    hidden: int = 100
    agg_hidden: int = 100
    clf_hidden: int = 100
    p: int = 5
    ps: int = 4
    dropout: float = 0.2
    no_title: bool = False
    no_abstract: bool = False
    no_surroundings: bool = False

    def validate(self) -> None:
        for name in ("emb_dim", "hidden", "agg_hidden", "clf_hidden", "p", "ps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    @property
    def rep_dim(self) -> int:
        return 2 * self.hidden + 3 * 2 * self.agg_hidden


@dataclass
class Batch:
    """Right-padded id arrays with their true lengths."""

    comment: np.ndarray
    comment_len: np.ndarray
    title: np.ndarray
    title_len: np.ndarray
    abstract: np.ndarray
    abstract_len: np.ndarray
    surround: np.ndarray
    surround_len: np.ndarray
    labels: np.ndarray
    news_types: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), max(int(lengths.max(initial=0)), 1)), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, lengths


def join_surroundings(surroundings: Sequence[Sequence[int]]) -> list[int]:
    """Concatenate encoded comments with a SEP id between neighbours."""
    out: list[int] = []
    for k, s in enumerate(surroundings):
        if k:
            out.append(SEP)
        out.extend(s)
    return out


def make_batch(instances: Sequence[TrainingInstance], vocab: Vocabulary) -> Batch:
    enc = vocab.encode
    comment, comment_len = pad([enc(i.comment.text) for i in instances])
    title, title_len = pad([enc(i.title) for i in instances])
    abstract, abstract_len = pad([enc(i.abstract) for i in instances])
    surround, surround_len = pad([join_surroundings([enc(s) for s in i.surroundings]) for i in instances])
    labels = np.array([i.label for i in instances], dtype=np.int64)
    return Batch(comment, comment_len, title, title_len, abstract, abstract_len,
                 surround, surround_len, labels, [i.news_type for i in instances])


def init_params(cfg: ModelConfig, vocab_size: int, seed: int = 0, dtype=None) -> dict[str, Tensor]:
    """Fresh trainable arrays keyed by stable names."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    raw: dict[str, np.ndarray] = {"embedding": init_embedding(vocab_size, cfg.emb_dim, rng)}
    for d in ("fwd", "bwd"):
        raw[f"encoder.{d}.W"], raw[f"encoder.{d}.b"] = init_lstm(cfg.emb_dim, cfg.hidden, rng)
    for target in TARGETS:
        for d in ("fwd", "bwd"):
            raw[f"perspective.{target}.{d}"] = init_perspectives(cfg.p, cfg.hidden, rng)
    for d in ("fwd", "bwd"):
        raw[f"aggregator.{d}.W"], raw[f"aggregator.{d}.b"] = init_lstm(2 * cfg.p, cfg.agg_hidden, rng)
    raw.update(init_classifier(cfg.rep_dim, cfg.clf_hidden, rng))
    return {name: Tensor(arr, requires_grad=True, name=name, dtype=dtype) for name, arr in raw.items()}


class MTMModel:
    """Forward pass over batches; holds the parameter dict and the config."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor]):
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: ModelConfig, vocab_size: int, seed: int = 0, dtype=None) -> "MTMModel":
        return cls(cfg, init_params(cfg, vocab_size, seed, dtype))

    @property
    def dtype(self):
        return self.params["embedding"].dtype

    def _encode(self, ids, lengths) -> EncodedText | None:
        if not (np.asarray(lengths) > 0).any():
            return None
        return encode(ids, lengths, self.params, self.cfg.ps)

    def _match(self, comment: EncodedText, ids, lengths, target: str, ablated: bool) -> Tensor:
        if ablated:
            return absent_match(comment, self.cfg.p)
        enc = self._encode(ids, lengths)
        return match_target(comment, enc, self.params[f"perspective.{target}.fwd"],
                            self.params[f"perspective.{target}.bwd"])

    def representation(self, batch: Batch, ablate: Sequence[str] = ()) -> Tensor:
        """R for every row of ``batch``; ``ablate`` adds targets to zero out."""
        cfg = self.cfg
        off = {"title": cfg.no_title, "abstract": cfg.no_abstract, "surroundings": cfg.no_surroundings}
        for t in ablate:
            off[t] = True
        comment = encode(batch.comment, batch.comment_len, self.params, cfg.ps)
        if (comment.pooled_lengths < 1).any():
            raise ValueError("every comment needs at least ps tokens")
        r_info = informativeness(comment)
        parts = []
        for target, ids, lengths in (("title", batch.title, batch.title_len),
                                     ("abstract", batch.abstract, batch.abstract_len),
                                     ("surroundings", batch.surround, batch.surround_len)):
            m = self._match(comment, ids, lengths, target, off[target])
            parts.append(aggregate_match(m, comment.pooled_lengths, self.params))
        return combine(r_info, *parts)

    def logits(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None,
               ablate: Sequence[str] = ()) -> Tensor:
        R = self.representation(batch, ablate)
        return classifier_logits(R, self.params, self.cfg.dropout, rng, training)

    def loss(self, batch: Batch, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return tc.softmax_cross_entropy(self.logits(batch, training, rng), batch.labels)

    def predict_proba(self, batch: Batch, ablate: Sequence[str] = ()) -> np.ndarray:
        """P(LOW), P(HIGH) per row in eval mode."""
        return tc.softmax(self.logits(batch, training=False, ablate=ablate)).data

    def config_dict(self) -> dict:
        return asdict(self.cfg)
