import sys

import numpy as np
import pytest

from mtm.corpus import CommentRecord, NewsExample, split
from mtm.synth import synth_corpus
from mtm.trainer import TrainConfig


def words(n, prefix="w"):
    return [f"{prefix}{i}" for i in range(n)]


def news_item(n_comments=3, likes=None, title_len=6, abstract_len=7, comment_len=6, news_type="tech", nid="n"):
    likes = likes if likes is not None else [0] * n_comments
    comments = [CommentRecord(words(comment_len, f"c{k}_"), likes[k], 0, cid=f"{nid}:{k}")
                for k in range(n_comments)]
    return NewsExample(words(title_len, "t"), words(abstract_len, "a"), words(3, "b"), news_type, comments, nid=nid)


def small_config(**kw):
    base = dict(emb_dim=12, hidden=8, agg_hidden=8, clf_hidden=8, p=2, ps=2, k=2,
                epochs=2, batch_size=16, min_count=1, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def tiny_splits():
    corpus = synth_corpus(seed=3, n_news=20, comments_per_news=6)
    return split(corpus.news, (0.6, 0.2, 0.2), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda x: int(x.split()[2])):
            terminalreporter.write_line(line)
