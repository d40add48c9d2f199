"""Command-line entry point: synth, train, eval, score, ablate, gradcheck.

Every command prints its resolved configuration as the first JSON line on
stdout; reports follow as one JSON object per line. Failures print a single
JSON line ``{"error": <kind>, "message": ...}`` to stderr and exit with the
code listed in ``EXIT_CODES``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict

import numpy as np

from . import tensor_core as tc
from .corpus import (CommentRecord, CorpusError, TrainingInstance, Vocabulary, filter_lengths, instances_for,
                     load_corpus, split)
from .encoder import load_pretrained
from .fileio import atomic_write
from .model import MTMModel, ModelConfig, make_batch
from .synth import synth_generate
from .trainer import (ABLATIONS, STANDARD_GRID, CheckpointError, TrainConfig, TrainingDiverged, ablation_sweep,
                      evaluate, load_checkpoint, predict, save_checkpoint, train)

EXIT_CODES = {
    "usage": 2,
    "missing_file": 3,
    "malformed_input": 4,
    "config": 5,
    "diverged": 6,
    "gradcheck_failed": 1,
}
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
GRADCHECK_TOL = 1e-3


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def _load_news(path, split_seed):
    corpus = load_corpus(path)
    news, stats = filter_lengths(corpus.news)
    return corpus, news, stats, split(news, SPLIT_FRACTIONS, seed=split_seed)


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig(lr=args.lr, dropout=args.dropout, batch_size=args.batch, epochs=args.epochs,
                      seed=args.seed, k=args.k, ps=args.ps, p=args.p, emb_dim=args.emb_dim,
                      hidden=args.hidden, agg_hidden=args.agg_hidden, clf_hidden=args.clf_hidden,
                      min_count=args.min_count, selection=args.selection,
                      no_title=getattr(args, "no_title", False),
                      no_abstract=getattr(args, "no_abstract", False),
                      no_surroundings=getattr(args, "no_surroundings", False))
    try:
        cfg.validate()
    except ValueError as exc:
        raise CliError("config", str(exc)) from None
    return cfg


def _add_training_flags(p, ablation_flags=True):
    d = TrainConfig()
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--dropout", type=float, default=d.dropout)
    p.add_argument("--batch", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--k", type=int, default=d.k, help="number of surrounding comments")
    p.add_argument("--ps", type=int, default=d.ps, help="mean-pooling size")
    p.add_argument("--p", type=int, default=d.p, help="number of perspectives")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--emb-dim", type=int, default=d.emb_dim)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--agg-hidden", type=int, default=d.agg_hidden)
    p.add_argument("--clf-hidden", type=int, default=d.clf_hidden)
    p.add_argument("--min-count", type=int, default=d.min_count)
    p.add_argument("--selection", choices=["position", "top_liked"], default=d.selection)
    p.add_argument("--split-seed", type=int, default=0)
    if ablation_flags:
        p.add_argument("--no-title", action="store_true")
        p.add_argument("--no-abstract", action="store_true")
        p.add_argument("--no-surroundings", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--news", type=int, default=200)
    p.add_argument("--comments-per-news", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--emb-file", help="pretrained embeddings (mtm-emb-v1)")
    _add_training_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--by-type", action="store_true")
    p.add_argument("--split", choices=["train", "valid", "test", "all"], default="test")

    p = sub.add_parser("score", help="score every comment, with ablated sub-scores")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="run an ablation / hyper-parameter grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--grid", default="paper",
                   help="'paper' for the standard K x ps grid, or 'ablations=full,noTitle;k=0,5;ps=1,4'")
    p.add_argument("--out", help="also write the report here")
    _add_training_flags(p, ablation_flags=False)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--samples", type=int, default=8, help="coordinates checked per parameter")
    return parser


# commands

def cmd_synth(args) -> int:
    if args.news < 1 or args.comments_per_news < 1:
        raise CliError("config", "--news and --comments-per-news must be positive")
    _emit({"command": "synth", "config": {"seed": args.seed, "news": args.news,
                                          "comments_per_news": args.comments_per_news, "out": args.out}})
    corpus = synth_generate(args.out, args.seed, args.news, args.comments_per_news)
    n_comments = sum(len(n.comments) for n in corpus.news)
    _emit({"written": args.out, "news": len(corpus.news), "comments": n_comments})
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    _emit({"command": "train", "config": asdict(cfg), "corpus": args.corpus, "out_ckpt": args.out_ckpt,
           "split_seed": args.split_seed, "split_fractions": list(SPLIT_FRACTIONS), "emb_file": args.emb_file})
    _, news, stats, (tr, va, _) = _load_news(args.corpus, args.split_seed)
    _emit({"filtered": asdict(stats), "news": {"train": len(tr), "valid": len(va)}})

    def load_embeddings(model, vocab):
        table = model.params["embedding"].data
        _emit({"pretrained_rows": load_pretrained(args.emb_file, vocab, table)})

    result = train(tr, va, cfg, on_epoch=_emit, init=load_embeddings if args.emb_file else None)
    save_checkpoint(args.out_ckpt, result, data={"split_seed": args.split_seed,
                                                 "split_fractions": list(SPLIT_FRACTIONS)})
    _emit({"best_epoch": result.best_epoch,
           "best_valid": result.best_metrics.to_dict() if result.best_metrics else None,
           "checkpoint": args.out_ckpt})
    return 0


def _ckpt_split(header, news, which):
    data = header.get("data", {})
    parts = split(news, tuple(data.get("split_fractions", SPLIT_FRACTIONS)), seed=data.get("split_seed", 0))
    return news if which == "all" else dict(zip(("train", "valid", "test"), parts))[which]


def cmd_eval(args) -> int:
    model, vocab, cfg, header = load_checkpoint(args.ckpt)
    _emit({"command": "eval", "config": {"ckpt": args.ckpt, "corpus": args.corpus, "by_type": args.by_type,
                                         "split": args.split, "model": asdict(cfg)}})
    corpus = load_corpus(args.corpus)
    news, _ = filter_lengths(corpus.news)
    part = _ckpt_split(header, news, args.split)
    inst = instances_for(part, cfg.k, cfg.selection)
    if not inst:
        raise CliError("config", f"split {args.split!r} has no comments")
    m = evaluate(model, inst, vocab, cfg.batch_size, group_by_type=args.by_type)
    _emit({"split": args.split, "metrics": m.to_dict()})
    return 0


def cmd_score(args) -> int:
    model, vocab, cfg, header = load_checkpoint(args.ckpt)
    _emit({"command": "score", "config": {"ckpt": args.ckpt, "corpus": args.corpus, "out": args.out,
                                          "model": asdict(cfg)}})
    corpus = load_corpus(args.corpus)
    news, _ = filter_lengths(corpus.news)
    inst = instances_for(news, cfg.k, cfg.selection)
    p_full = predict(model, inst, vocab, cfg.batch_size)
    subs = {f"no_{t}": predict(model, inst, vocab, cfg.batch_size, ablate=(t,))
            for t in ("title", "abstract", "surroundings")}
    with atomic_write(args.out) as fh:
        for i, x in enumerate(inst):
            row = {"cid": x.comment.cid, "label": x.label, "p_high": float(p_full[i]),
                   "score": 10.0 * float(p_full[i]),
                   "sub_scores": {k: 10.0 * float(v[i]) for k, v in subs.items()}}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _emit({"written": args.out, "comments": len(inst)})
    return 0


def parse_grid(text: str) -> dict:
    """``paper`` (the standard grid) or ``key=v1,v2;...`` with keys ablations, k, ps."""
    if text == "paper":
        return {k: list(v) for k, v in STANDARD_GRID.items()}
    grid = {"ablations": ["full"], "ks": None, "pss": None}
    for part in filter(None, (s.strip() for s in text.split(";"))):
        key, _, values = part.partition("=")
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise CliError("config", f"grid entry {part!r} has no values")
        if key == "ablations":
            bad = [v for v in vals if v not in ABLATIONS]
            if bad:
                raise CliError("config", f"unknown ablations {bad}; expected {list(ABLATIONS)}")
            grid["ablations"] = vals
        elif key in ("k", "ps"):
            try:
                grid[key + "s"] = [int(v) for v in vals]
            except ValueError:
                raise CliError("config", f"grid values for {key} must be integers") from None
        else:
            raise CliError("config", f"unknown grid key {key!r}")
    return grid


def cmd_ablate(args) -> int:
    base = _train_config(args)
    grid = parse_grid(args.grid)
    _emit({"command": "ablate", "config": asdict(base), "grid": grid, "corpus": args.corpus,
           "split_seed": args.split_seed})
    _, news, _, splits = _load_news(args.corpus, args.split_seed)
    rows = ablation_sweep(splits, base, grid["ablations"], grid["ks"], grid["pss"], emit=_emit)
    if args.out:
        with atomic_write(args.out) as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def gradcheck_toy(seed: int = 1):
    """Three random instances, every text 5-6 tokens, H=8, p=2, in float64."""
    rng = np.random.default_rng(seed)
    vocab = Vocabulary([f"t{i}" for i in range(12)])
    words = vocab.tokens()

    def text():
        return [words[i] for i in rng.integers(0, len(words), size=int(rng.integers(5, 7)))]

    inst = [TrainingInstance(CommentRecord(text(), int(rng.integers(0, 30))), text(), text(), [text()], "toy")
            for _ in range(3)]
    cfg = ModelConfig(emb_dim=6, hidden=8, agg_hidden=8, clf_hidden=8, p=2, ps=2, dropout=0.0)
    model = MTMModel.create(cfg, len(vocab), seed=seed, dtype=np.float64)
    return model, inst, vocab


def cmd_gradcheck(args) -> int:
    _emit({"command": "gradcheck", "config": {"seed": args.seed, "h": args.h, "samples": args.samples,
                                              "tolerance": GRADCHECK_TOL}})
    if not 1e-4 <= args.h <= 1e-2:
        raise CliError("config", f"--h must lie in [1e-4, 1e-2], got {args.h}")
    start = time.perf_counter()
    with tc.default_dtype(np.float64):
        model, inst, vocab = gradcheck_toy(args.seed)
        batch = make_batch(inst, vocab)
        res = tc.grad_check(lambda: model.loss(batch), model.params, h=args.h,
                            samples_per_param=args.samples, seed=args.seed)
    ok = res.max_rel_error < GRADCHECK_TOL
    _emit({"max_rel_error": res.max_rel_error, "worst": [res.worst[0], [int(i) for i in res.worst[1]]]
           if res.worst else None, "checked": res.n_checked, "seconds": time.perf_counter() - start,
           "pass": ok})
    return 0 if ok else EXIT_CODES["gradcheck_failed"]


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "score": cmd_score,
            "ablate": cmd_ablate, "gradcheck": cmd_gradcheck}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except CliError as exc:
        kind, msg = exc.kind, str(exc)
    except FileNotFoundError as exc:
        kind, msg = "missing_file", f"{exc.strerror}: {exc.filename}"
    except (CorpusError, CheckpointError) as exc:
        kind, msg = "malformed_input", str(exc)
    except TrainingDiverged as exc:
        kind, msg = "diverged", str(exc)
    except ValueError as exc:
        kind, msg = "config", str(exc)
    print(json.dumps({"error": kind, "message": msg}), file=sys.stderr)
    return EXIT_CODES[kind]


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
