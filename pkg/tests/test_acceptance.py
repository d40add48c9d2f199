"""Acceptance criteria, one check per criterion.

Each check returns ``(passed, detail)`` and prints one PASS/FAIL line.
Run under pytest, or directly with ``python3 tests/test_acceptance.py [N ...]``.
"""
import io
import json
import sys
import time
from collections import Counter
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import FixedModel, oracle_error  # noqa: E402
from mtm import tensor_core as tc  # noqa: E402
from mtm.cli import run  # noqa: E402
from mtm.corpus import (HIGH, LOW, CommentRecord, NewsExample, Vocabulary, filter_lengths, instances_for,  # noqa: E402
                        make_instances, parse_corpus, split)
from mtm.encoder import mean_pool  # noqa: E402
from mtm.matcher import multi_perspective  # noqa: E402
from mtm.model import MTMModel, ModelConfig, make_batch  # noqa: E402
from mtm.synth import synth_corpus  # noqa: E402
from mtm.tensor_core import Tensor  # noqa: E402
from mtm.trainer import ABLATION_FLAGS, TrainConfig, ablation_sweep, evaluate, train  # noqa: E402

# width used by the five-seed ablation run; everything else stays at its default
ABLATION_WIDTH = 32
ABLATION_EPOCHS = 8


# lines are also replayed in the pytest terminal summary, where capture cannot hide them
REPORT_LINES = []


def report(n, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {n} ({title}): {detail}"
    REPORT_LINES.append(line)
    print(line, flush=True)


def cli_json(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = run(argv)
    return code, [json.loads(x) for x in buf.getvalue().splitlines() if x.strip()]


def synth_splits(n_news=200, comments=10):
    news, _ = filter_lengths(synth_corpus(seed=7, n_news=n_news, comments_per_news=comments).news)
    return split(news, (0.8, 0.1, 0.1), seed=0)


def criterion_1():
    start = time.perf_counter()
    code, out = cli_json(["gradcheck", "--seed", "1"])
    elapsed = time.perf_counter() - start
    err = out[-1]["max_rel_error"]
    ok = code == 0 and err < 1e-3 and elapsed < 30
    return ok, f"max relative error {err:.2e} over {out[-1]['checked']} coordinates in {elapsed:.1f} s"


def criterion_2():
    errors = [oracle_error(seed) for seed in range(100)]
    worst = max(errors)
    return worst < 1e-5, f"max |diff| {worst:.2e} over {len(errors)} seeds"


def criterion_3():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 5, 4)))
    f, b = mean_pool(x, x, 1)
    pool_ok = np.array_equal(f.data, x.data) and np.array_equal(b.data, x.data)

    with tc.default_dtype(np.float64):
        v1, v2 = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        mp = multi_perspective(Tensor(v1), Tensor(v2), Tensor(np.ones((1, 4)))).data[:, 0]
        plain = tc.cosine(Tensor(v1), Tensor(v2)).data
    mp_err = float(np.abs(mp - plain).max())

    tr, va, te = synth_splits(30, 6)
    vocab = Vocabulary(sorted({t for n in tr for c in n.comments for t in c.text}))
    model = MTMModel.create(ModelConfig(emb_dim=16, hidden=8, agg_hidden=8, clf_hidden=8, p=2, ps=2), len(vocab))
    k0 = model.representation(make_batch(instances_for(va, 0), vocab)).data
    cut = model.representation(make_batch(instances_for(va, 5), vocab), ("surroundings",)).data
    base = TrainConfig(emb_dim=16, hidden=8, agg_hidden=8, clf_hidden=8, p=2, ps=2, epochs=2, min_count=1)
    (a,) = ablation_sweep((tr, va, te), base, ["noSurroundings"], [5], [2])
    (b,) = ablation_sweep((tr, va, te), base, ["full"], [0], [2])
    k_ok = np.array_equal(k0, cut) and a["valid"] == b["valid"] and a["test"] == b["test"]

    ok = pool_ok and mp_err < 1e-6 and k_ok
    return ok, (f"ps=1 identity {pool_ok}; p=1 unit weights vs cosine max diff {mp_err:.1e}; "
                f"K=0 vs noSurroundings bit-identical (representation and trained metrics) {k_ok}")


def criterion_4():
    tr, va, _ = synth_splits()
    labels = Counter(i.label for i in instances_for(va, 0))
    majority = max(labels.values()) / sum(labels.values())
    start = time.perf_counter()
    result = train(tr, va, TrainConfig(epochs=10, seed=0))
    elapsed = time.perf_counter() - start
    reached = [h for h in result.history if h["valid"]["accuracy"] >= 0.90 and h["valid"]["f1"] >= 0.90]
    first = reached[0]["epoch"] if reached else None
    ok = bool(reached) and elapsed < 600 and majority <= 0.60
    best = result.best_metrics
    return ok, (f"first epoch with acc and F1 >= 0.90: {first}; best valid acc {best.accuracy:.3f} "
                f"F1 {best.f1:.3f} (epoch {result.best_epoch}); {elapsed:.0f} s; majority baseline {majority:.3f}")


def criterion_5():
    tr, va, te = synth_splits()
    f1 = {name: [] for name in ABLATION_FLAGS}
    for seed in range(5):
        base = TrainConfig(emb_dim=2 * ABLATION_WIDTH, hidden=ABLATION_WIDTH, agg_hidden=ABLATION_WIDTH,
                           clf_hidden=ABLATION_WIDTH, epochs=ABLATION_EPOCHS, seed=seed)
        for row in ablation_sweep((tr, va, te), base, list(ABLATION_FLAGS)):
            f1[row["ablation"]].append(row["valid"]["f1"])
    mean = {k: float(np.mean(v)) for k, v in f1.items()}
    ok = all(mean[k] < mean["full"] for k in mean if k != "full")
    return ok, "mean valid F1 over 5 seeds: " + ", ".join(f"{k} {v:.4f}" for k, v in mean.items())


def criterion_6(tmp_dir):
    corpus = Path(tmp_dir) / "grid.jsonl"
    cli_json(["synth", "--seed", "7", "--news", "20", "--comments-per-news", "6", "--out", str(corpus)])
    small = ["--emb-dim", "8", "--hidden", "6", "--agg-hidden", "6", "--clf-hidden", "6", "--p", "2",
             "--epochs", "1", "--min-count", "1"]
    runs = [cli_json(["ablate", "--corpus", str(corpus), "--grid", "paper"] + small) for _ in range(2)]
    rows = [[r for r in out if "ablation" in r] for _, out in runs]
    cells = [(r["k"], r["ps"]) for r in rows[0]]
    expected = [(k, ps) for k in (0, 1, 3, 5) for ps in (1, 2, 3, 4)]
    ok = all(code == 0 for code, _ in runs) and cells == expected and rows[0] == rows[1]
    return ok, f"{len(rows[0])} rows, cells match K x ps grid {cells == expected}, repeat identical {rows[0] == rows[1]}"


def criterion_7():
    news = NewsExample(["t"] * 5, ["a"] * 5, [], "x",
                       [CommentRecord(["c"] * 5, 50 if k < 5 else 0) for k in range(10)])
    probs = [0.9, 0.8, 0.7, 0.2, 0.1] + [0.6, 0.3, 0.2, 0.1, 0.4]
    m = evaluate(FixedModel(probs), make_instances(news, 0), Vocabulary(), batch_size=3)
    counts = (m.tp, m.fp, m.fn, m.tn)
    ok = counts == (3, 1, 2, 4) and (m.precision, m.recall, m.accuracy) == (0.75, 0.6, 0.7) \
        and m.f1 == 2 * 0.75 * 0.6 / (0.75 + 0.6)
    return ok, f"tp,fp,fn,tn={counts} P={m.precision} R={m.recall} Acc={m.accuracy} F1={m.f1:.4f}"


def criterion_8():
    header = json.dumps({"schema": "mtm-corpus-v1", "types": ["society"]})

    def item(title_len, comment_lens, likes):
        return json.dumps({"title": ["t"] * title_len, "abstract": ["a"] * 6, "body": [], "type": "society",
                           "comments": [{"text": ["w"] * n, "likes": lk, "replies": 0}
                                        for n, lk in zip(comment_lens, likes)]})

    corpus = parse_corpus([header, item(6, [5, 5, 5, 5], [247, 0, 10, 11]), item(6, [4, 5, 200, 201], [0] * 4),
                           item(201, [5], [20]), item(5, [5], [3])])
    labels = [c.label for c in corpus.news[0].comments]
    kept, stats = filter_lengths(corpus.news)
    lengths = [len(c.text) for c in kept[1].comments]
    ok = (labels == [HIGH, LOW, LOW, HIGH] and lengths == [5, 200] and len(kept) == 3
          and stats.news_dropped == 1 and len(kept[2].title) == 5)
    return ok, (f"likes 247/0/10/11 -> {['HIGH' if y == HIGH else 'LOW' for y in labels]}; "
                f"comment lengths kept {lengths} of [4, 5, 200, 201]; 201-token title dropped {stats.news_dropped == 1}")


CRITERIA = {
    1: ("gradient fidelity", criterion_1),
    2: ("layer oracle equivalence", criterion_2),
    3: ("reduction identities", criterion_3),
    4: ("synthetic learnability", criterion_4),
    5: ("ablation direction", criterion_5),
    6: ("grid reproduction", criterion_6),
    7: ("metrics oracle", criterion_7),
    8: ("data rules", criterion_8),
}


def check(n, *args):
    title, fn = CRITERIA[n]
    passed, detail = fn(*args)
    report(n, title, passed, detail)
    return passed, detail


@pytest.mark.parametrize("n", [1, 2, 3, 7, 8])
def test_fast_criteria(n):
    passed, detail = check(n)
    assert passed, detail


@pytest.mark.slow
def test_criterion_4_learnability():
    passed, detail = check(4)
    assert passed, detail


@pytest.mark.slow
def test_criterion_5_ablation_direction():
    passed, detail = check(5)
    assert passed, detail


def test_criterion_6_grid(tmp_path):
    passed, detail = check(6, tmp_path)
    assert passed, detail


if __name__ == "__main__":
    import tempfile

    wanted = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    results = []
    for n in wanted:
        with tempfile.TemporaryDirectory() as tmp:
            results.append(check(n, tmp) if n == 6 else check(n))
    sys.exit(0 if all(p for p, _ in results) else 1)
