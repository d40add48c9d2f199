"""Deterministic synthetic news-comment corpora.

High-quality comments quote a short span of their own title and of their
own abstract and add a few words no sibling uses. Low-quality comments come
in four kinds, each detectable through a different signal:

* ``short``: a handful of filler words (comment alone).
* ``off_title``: quotes the abstract but another item's title (needs the title).
* ``off_abstract``: quotes the title but another item's abstract (needs the abstract).
* ``duplicate``: two or three adjacent near-copies of one on-topic comment
  (needs the surrounding comments).

All words come from shared pools, so no token is informative on its own.
"""
from __future__ import annotations

import numpy as np

from .corpus import Corpus, CommentRecord, NewsExample, dump_corpus
from .fileio import atomic_write

NEWS_TYPES = ["society", "sports", "tech", "finance", "entertainment"]
LOW_KINDS = ("short", "off_title", "off_abstract", "duplicate")


class _Generator:
    def __init__(self, seed: int, n_content: int = 800, n_filler: int = 120):
        self.rng = np.random.default_rng(seed)
        self.content = [f"w{i:04d}" for i in range(n_content)]
        self.filler = [f"f{i:03d}" for i in range(n_filler)]

    def words(self, pool, n):
        return [pool[i] for i in self.rng.choice(len(pool), size=n, replace=False)]

    def span(self, seq, lo=5, hi=7):
        n = int(self.rng.integers(lo, hi + 1))
        start = int(self.rng.integers(0, len(seq) - n + 1))
        return seq[start:start + n]

    def comment(self, title_src, abstract_src, banned):
        """Filler-interleaved comment quoting both sources plus novel content words."""
        novel_pool = [w for w in self.content if w not in banned]
        novel = self.words(novel_pool, int(self.rng.integers(2, 4)))
        parts = [self.span(title_src), self.span(abstract_src), novel]
        self.rng.shuffle(parts)
        out = []
        for part in parts:
            out += self.words(self.filler, int(self.rng.integers(1, 3)))
            out += part
        out += self.words(self.filler, int(self.rng.integers(0, 2)))
        return out

    def high_likes(self):
        return int(11 + self.rng.geometric(0.02))

    def low_likes(self):
        return int(self.rng.integers(0, 11))

    def replies(self):
        return int(self.rng.integers(0, 6))


def synth_corpus(seed: int = 7, n_news: int = 200, comments_per_news: int = 10,
                 high_fraction: float = 0.55) -> Corpus:
    g = _Generator(seed)
    rng = g.rng
    heads = []
    for _ in range(n_news):
        title = g.words(g.content, int(rng.integers(8, 12)))
        abstract = g.words(g.content, int(rng.integers(9, 13)))
        heads.append((title, abstract))

    news = []
    for idx, (title, abstract) in enumerate(heads):
        others = [j for j in range(n_news) if j != idx] or [idx]
        banned = set(title) | set(abstract)
        n_low = int(rng.binomial(comments_per_news, 1.0 - high_fraction))
        kinds = []
        while len(kinds) < n_low:
            kind = LOW_KINDS[int(rng.integers(len(LOW_KINDS)))]
            if kind == "duplicate":
                room = n_low - len(kinds)
                if room < 2:
                    continue
                kinds.append(("duplicate",))
                kinds.extend([None] * (min(room, 3) - 1))
            else:
                kinds.append((kind,))
        blocks = [[("high",)] for _ in range(comments_per_news - n_low)]
        for k in kinds:
            if k is None:
                blocks[-1].append(("duplicate",))
            else:
                blocks.append([k])
        rng.shuffle(blocks)

        comments = []
        for block in blocks:
            kind = block[0][0]
            if kind == "high":
                comments.append(CommentRecord(g.comment(title, abstract, banned), g.high_likes(), g.replies()))
            elif kind == "short":
                text = g.words(g.filler, int(rng.integers(5, 8)))
                comments.append(CommentRecord(text, g.low_likes(), g.replies()))
            elif kind == "off_title":
                other = heads[others[int(rng.integers(len(others)))]][0]
                comments.append(CommentRecord(g.comment(other, abstract, banned), g.low_likes(), g.replies()))
            elif kind == "off_abstract":
                other = heads[others[int(rng.integers(len(others)))]][1]
                comments.append(CommentRecord(g.comment(title, other, banned), g.low_likes(), g.replies()))
            else:
                base = g.comment(title, abstract, banned)
                for _ in block:
                    text = list(base)
                    pos = int(rng.integers(len(text)))
                    if text[pos].startswith("f"):
                        text[pos] = g.filler[int(rng.integers(len(g.filler)))]
                    comments.append(CommentRecord(text, g.low_likes(), g.replies()))
        body = abstract + g.words(g.content, int(rng.integers(30, 50)))
        news_type = NEWS_TYPES[int(rng.integers(len(NEWS_TYPES)))]
        nid = str(idx + 2)  # line number the item gets in the written file
        for k, c in enumerate(comments):
            c.cid = f"{nid}:{k}"
        news.append(NewsExample(title, abstract, body, news_type, comments, nid=nid))
    return Corpus(list(NEWS_TYPES), news)


def synth_generate(path, seed: int = 7, n_news: int = 200, comments_per_news: int = 10) -> Corpus:
    """Write a synthetic corpus file; identical arguments give byte-identical files."""
    corpus = synth_corpus(seed, n_news, comments_per_news)
    with atomic_write(path) as fh:
        fh.write(dump_corpus(corpus))
    return corpus
