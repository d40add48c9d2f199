"""Training with Adam, evaluation metrics, checkpoints and ablation sweeps."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor_core as tc
from .corpus import HIGH, NewsExample, TrainingInstance, Vocabulary, build_vocab, instances_for
from .fileio import atomic_write
from .model import Batch, MTMModel, ModelConfig, make_batch
from .tensor_core import Tensor

log = logging.getLogger(__name__)

CKPT_SCHEMA = "mtm-ckpt-v1"
ABLATIONS = ("full", "noTitle", "noAbstract", "noSurroundings")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.001
    dropout: float = 0.2
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    k: int = 5
    ps: int = 4
    p: int = 5
    emb_dim: int = 200
    hidden: int = 100
    agg_hidden: int = 100
    clf_hidden: int = 100
    min_count: int = 2
    selection: str = "position"
    no_title: bool = False
    no_abstract: bool = False
    no_surroundings: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.lr < 1.0:
            raise ValueError(f"lr must lie in [0, 1), got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in ("batch_size", "epochs", "ps", "p", "emb_dim", "hidden", "agg_hidden",
                     "clf_hidden", "min_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.selection not in ("position", "top_liked"):
            raise ValueError(f"unknown selection policy {self.selection!r}")

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# metrics

@dataclass
class Metrics:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    by_type: dict[str, "Metrics"] = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, predicted: Sequence[int], labels: Sequence[int],
                         types: Sequence[str] | None = None) -> "Metrics":
        pred = np.asarray(predicted) == HIGH
        gold = np.asarray(labels) == HIGH
        m = cls(int(np.sum(pred & gold)), int(np.sum(pred & ~gold)),
                int(np.sum(~pred & ~gold)), int(np.sum(~pred & gold)))
        if types is not None:
            types = np.asarray(types)
            for t in sorted(set(types.tolist())):
                sel = types == t
                m.by_type[t] = cls.from_predictions(np.asarray(predicted)[sel], np.asarray(labels)[sel])
        return m

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def to_dict(self) -> dict:
        d = {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
             "f1": self.f1, "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}
        if self.by_type:
            d["by_type"] = {t: m.to_dict() for t, m in self.by_type.items()}
        return d


# optimisation

class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def batches(items: Sequence, size: int) -> Iterable[Sequence]:
    for i in range(0, len(items), size):
        yield items[i:i + size]


def train_step(model: MTMModel, opt: Adam, batch: Batch, rng: np.random.Generator) -> float:
    try:
        with tc.Tape() as tape:
            loss = model.loss(batch, training=True, rng=rng)
    except tc.NonFiniteError as exc:
        raise TrainingDiverged(str(exc)) from None
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDiverged(f"loss became non-finite ({value})")
    names = list(model.params)
    grads = tape.gradient(loss, [model.params[n] for n in names])
    opt.step(dict(zip(names, grads)))
    return value


def predict(model: MTMModel, instances: Sequence[TrainingInstance], vocab: Vocabulary,
            batch_size: int = 32, ablate: Sequence[str] = ()) -> np.ndarray:
    """P(HIGH) for each instance, eval mode, fixed order."""
    out = [model.predict_proba(make_batch(chunk, vocab), ablate)[:, HIGH]
           for chunk in batches(instances, batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(model: MTMModel, instances: Sequence[TrainingInstance], vocab: Vocabulary,
             batch_size: int = 32, group_by_type: bool = False) -> Metrics:
    """Metrics at the argmax decision; HIGH is the positive class."""
    if not instances:
        raise ValueError("cannot evaluate an empty split")
    probs = predict(model, instances, vocab, batch_size)
    pred = (probs > 0.5).astype(int)
    labels = [i.label for i in instances]
    types = [i.news_type for i in instances] if group_by_type else None
    return Metrics.from_predictions(pred, labels, types)


@dataclass
class TrainResult:
    model: MTMModel
    vocab: Vocabulary
    config: TrainConfig
    history: list[dict]
    best_epoch: int
    best_metrics: Metrics | None


def train(train_news: Sequence[NewsExample], valid_news: Sequence[NewsExample], cfg: TrainConfig,
          on_epoch: Callable[[dict], None] | None = None, vocab: Vocabulary | None = None,
          dtype=None, init: Callable[[MTMModel, Vocabulary], None] | None = None) -> TrainResult:
    """Fit a fresh model; keep the parameters with the best validation F1.

    ``init`` may adjust the freshly initialised model (e.g. load pretrained
    embeddings) before the first step.
    """
    cfg.validate()
    if not train_news:
        raise ValueError("training split is empty")
    vocab = vocab or build_vocab(train_news, cfg.min_count)
    train_inst = instances_for(train_news, cfg.k, cfg.selection)
    valid_inst = instances_for(valid_news, cfg.k, cfg.selection)
    if not train_inst:
        raise ValueError("training split has no comments")

    init_seq, shuffle_seq, drop_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    model = MTMModel.create(cfg.model_config(), len(vocab), seed=int(init_seq.generate_state(1)[0]),
                            dtype=dtype)
    if init is not None:
        init(model, vocab)
    opt = Adam(model.params, lr=cfg.lr)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    drop_rng = np.random.default_rng(drop_seq)

    history = []
    best_state, best_epoch, best_metrics, best_f1 = None, 0, None, -1.0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_inst))
        losses = []
        for idx in batches(order, cfg.batch_size):
            batch = make_batch([train_inst[i] for i in idx], vocab)
            losses.append(train_step(model, opt, batch, drop_rng) * len(idx))
        entry = {"epoch": epoch, "train_loss": float(np.sum(losses) / len(train_inst))}
        if valid_inst:
            vm = evaluate(model, valid_inst, vocab, cfg.batch_size)
            entry["valid"] = vm.to_dict()
            if vm.f1 > best_f1:
                best_f1, best_epoch, best_metrics = vm.f1, epoch, vm
                best_state = {k: p.data.copy() for k, p in model.params.items()}
        history.append(entry)
        log.info("epoch %d loss %.4f %s", epoch, entry["train_loss"],
                 f"valid f1 {entry['valid']['f1']:.4f}" if "valid" in entry else "")
        if on_epoch:
            on_epoch(entry)
    if best_state is not None:
        for k, arr in best_state.items():
            model.params[k].data[...] = arr
    else:
        best_epoch = cfg.epochs
    return TrainResult(model, vocab, cfg, history, best_epoch, best_metrics)


# checkpoints

def save_checkpoint(path, result: TrainResult, data: dict | None = None) -> None:
    """Header JSON line, then every parameter as little-endian float32 in header order."""
    params = result.model.params
    header = {
        "schema": CKPT_SCHEMA,
        "config": asdict(result.config),
        "params": [{"name": k, "shape": list(p.shape)} for k, p in params.items()],
        "vocab": result.vocab.tokens(),
        "best_epoch": result.best_epoch,
        "best_valid": result.best_metrics.to_dict() if result.best_metrics else None,
        "data": data or {},
    }
    with atomic_write(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for p in params.values():
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[MTMModel, Vocabulary, TrainConfig, dict]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise CheckpointError(f"{path}: unreadable checkpoint header") from None
        if header.get("schema") != CKPT_SCHEMA:
            raise CheckpointError(f"{path}: unknown checkpoint schema {header.get('schema')!r}")
        payload = fh.read()
    cfg = TrainConfig.from_dict(header["config"])
    vocab = Vocabulary(header["vocab"])
    params, offset = {}, 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * 4
        if offset + n > len(payload):
            raise CheckpointError(f"{path}: payload truncated at {entry['name']}")
        arr = np.frombuffer(payload, dtype="<f4", count=n // 4, offset=offset).reshape(shape)
        params[entry["name"]] = Tensor(arr.astype(np.float32), requires_grad=True, name=entry["name"])
        offset += n
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing payload bytes")
    return MTMModel(cfg.model_config(), params), vocab, cfg, header


# sweeps

ABLATION_FLAGS = {
    "full": {},
    "noTitle": {"no_title": True},
    "noAbstract": {"no_abstract": True},
    "noSurroundings": {"no_surroundings": True},
}

STANDARD_GRID = {"ablations": ["full"], "ks": [0, 1, 3, 5], "pss": [1, 2, 3, 4]}


def ablation_sweep(splits: tuple[Sequence[NewsExample], Sequence[NewsExample], Sequence[NewsExample]],
                   base: TrainConfig, ablations: Sequence[str] = ("full",), ks: Sequence[int] | None = None,
                   pss: Sequence[int] | None = None, emit: Callable[[dict], None] | None = None) -> list[dict]:
    """Train one model per grid cell with identical seeds; one metrics row per cell."""
    train_news, valid_news, test_news = splits
    ks = list(ks) if ks else [base.k]
    pss = list(pss) if pss else [base.ps]
    rows = []
    for ablation, k, ps in itertools.product(ablations, ks, pss):
        if ablation not in ABLATION_FLAGS:
            raise ValueError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
        cfg = replace(base, k=k, ps=ps, **ABLATION_FLAGS[ablation])
        result = train(train_news, valid_news, cfg)
        row = {"ablation": ablation, "k": k, "ps": ps, "seed": cfg.seed, "best_epoch": result.best_epoch,
               "valid": result.best_metrics.to_dict() if result.best_metrics else None}
        test_inst = instances_for(test_news, k, cfg.selection)
        row["test"] = evaluate(result.model, test_inst, result.vocab, cfg.batch_size).to_dict() if test_inst else None
        rows.append(row)
        if emit:
            emit(row)
    return rows
