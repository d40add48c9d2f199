"""News-comment corpora: parsing, labeling, filtering, vocabularies, splits.

A corpus file is UTF-8 JSON lines. The first line is a header
``{"schema": "mtm-corpus-v1", "types": [...]}``; every following line is one
news item with pre-segmented token arrays::

    {"title": [...], "abstract": [...], "body": [...], "type": "sports",
     "comments": [{"text": [...], "likes": 247, "replies": 3}, ...]}
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .fileio import atomic_write

SCHEMA = "mtm-corpus-v1"
HIGH, LOW = 1, 0
LIKES_THRESHOLD = 10
MIN_LEN, MAX_LEN = 5, 200

PAD, UNK, SEP = 0, 1, 2
PAD_TOKEN, UNK_TOKEN, SEP_TOKEN = "<pad>", "<unk>", "<sep>"


class CorpusError(ValueError):
    """Malformed corpus input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def label_for_likes(likes: int) -> int:
    """HIGH iff the comment has strictly more than 10 likes."""
    return HIGH if likes > LIKES_THRESHOLD else LOW


@dataclass
class CommentRecord:
    text: list[str]
    likes: int
    replies: int = 0
    cid: str = ""

    @property
    def label(self) -> int:
        return label_for_likes(self.likes)


@dataclass
class NewsExample:
    title: list[str]
    abstract: list[str]
    body: list[str]
    news_type: str
    comments: list[CommentRecord] = field(default_factory=list)
    nid: str = ""


@dataclass
class TrainingInstance:
    comment: CommentRecord
    title: list[str]
    abstract: list[str]
    surroundings: list[list[str]]
    news_type: str = ""

    @property
    def label(self) -> int:
        return self.comment.label


@dataclass
class Corpus:
    types: list[str]
    news: list[NewsExample]


# parsing

def _tokens(obj, key, lineno):
    if key not in obj:
        raise CorpusError(f"missing required field {key!r}", lineno)
    val = obj[key]
    if not isinstance(val, list) or not all(isinstance(t, str) for t in val):
        raise CorpusError(f"field {key!r} must be a list of token strings", lineno)
    return list(val)


def _count(obj, key, lineno):
    if key not in obj:
        raise CorpusError(f"missing required field {key!r}", lineno)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise CorpusError(f"field {key!r} must be an integer", lineno)
    if val < 0:
        raise CorpusError(f"negative {key}: {val}", lineno)
    return val


def parse_news(obj: dict, lineno: int, types: Sequence[str] | None = None) -> NewsExample:
    if not isinstance(obj, dict):
        raise CorpusError("record is not a JSON object", lineno)
    if "type" not in obj:
        raise CorpusError("missing required field 'type'", lineno)
    news_type = obj["type"]
    if types is not None and news_type not in types:
        raise CorpusError(f"news type {news_type!r} not declared in header", lineno)
    if "comments" not in obj or not isinstance(obj["comments"], list):
        raise CorpusError("missing required field 'comments'", lineno)
    nid = str(lineno)
    comments = []
    for k, c in enumerate(obj["comments"]):
        if not isinstance(c, dict):
            raise CorpusError(f"comment {k} is not an object", lineno)
        comments.append(CommentRecord(_tokens(c, "text", lineno), _count(c, "likes", lineno),
                                      _count(c, "replies", lineno), cid=f"{nid}:{k}"))
    return NewsExample(_tokens(obj, "title", lineno), _tokens(obj, "abstract", lineno),
                       _tokens(obj, "body", lineno), news_type, comments, nid=nid)


def parse_corpus(lines: Iterable[str]) -> Corpus:
    it = iter(enumerate(lines, start=1))
    header = None
    for lineno, line in it:
        if line.strip():
            try:
                header = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
            break
    if header is None:
        raise CorpusError("empty corpus file: header line required")
    if not isinstance(header, dict) or "schema" not in header:
        raise CorpusError("first line must be the corpus header", 1)
    if header["schema"] != SCHEMA:
        raise CorpusError(f"unknown schema version {header['schema']!r}", lineno)
    types = header.get("types")
    if not isinstance(types, list) or not all(isinstance(t, str) for t in types):
        raise CorpusError("header 'types' must be a list of strings", lineno)
    news = []
    for lineno, line in it:
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
        news.append(parse_news(obj, lineno, types))
    return Corpus(types, news)


def load_corpus(path) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def dump_corpus(corpus: Corpus) -> str:
    out = [json.dumps({"schema": SCHEMA, "types": corpus.types}, ensure_ascii=False)]
    for n in corpus.news:
        out.append(json.dumps({
            "title": n.title, "abstract": n.abstract, "body": n.body, "type": n.news_type,
            "comments": [{"text": c.text, "likes": c.likes, "replies": c.replies} for c in n.comments],
        }, ensure_ascii=False))
    return "\n".join(out) + "\n"


def save_corpus(corpus: Corpus, path) -> None:
    with atomic_write(path) as fh:
        fh.write(dump_corpus(corpus))


# filtering

@dataclass
class FilterStats:
    news_dropped: int = 0
    comments_dropped: int = 0


def _ok(tokens) -> bool:
    return MIN_LEN <= len(tokens) <= MAX_LEN


def filter_lengths(news: Iterable[NewsExample]) -> tuple[list[NewsExample], FilterStats]:
    """Drop comments outside [5, 200] tokens and news whose title or abstract is."""
    kept, stats = [], FilterStats()
    for n in news:
        if not (_ok(n.title) and _ok(n.abstract)):
            stats.news_dropped += 1
            stats.comments_dropped += len(n.comments)
            continue
        comments = [c for c in n.comments if _ok(c.text)]
        stats.comments_dropped += len(n.comments) - len(comments)
        kept.append(NewsExample(n.title, n.abstract, n.body, n.news_type, comments, n.nid))
    return kept, stats


# vocabulary

class Vocabulary:
    """Token/id map with PAD=0, UNK=1, SEP=2 reserved."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos = [PAD_TOKEN, UNK_TOKEN, SEP_TOKEN]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t in self.stoi:
                raise ValueError(f"duplicate vocabulary token {t!r}")
            self.stoi[t] = len(self.itos)
            self.itos.append(t)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order."""
        return self.itos[3:]


def build_vocab(news: Sequence[NewsExample], min_count: int = 2) -> Vocabulary:
    """Tokens seen at least ``min_count`` times in titles, abstracts and comments.

    Ids follow descending frequency, ties broken lexicographically.
    """
    counts: Counter[str] = Counter()
    for n in news:
        counts.update(n.title)
        counts.update(n.abstract)
        for c in n.comments:
            counts.update(c.text)
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    reserved = {PAD_TOKEN, UNK_TOKEN, SEP_TOKEN}
    kept = sorted((t for t, n in counts.items() if n >= min_count and t not in reserved),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


# training instances

def select_surroundings(comments: Sequence[CommentRecord], index: int, k: int,
                        policy: str = "position") -> list[int]:
    """Indices of up to ``k`` other comments, returned in comment-list order.

    ``position`` takes the nearest by list distance (earlier first on ties);
    ``top_liked`` takes the most-liked, ties to the earlier comment.
    """
    if k < 0:
        raise ValueError(f"K must be >= 0, got {k}")
    others = [j for j in range(len(comments)) if j != index]
    if policy == "position":
        others.sort(key=lambda j: (abs(j - index), j))
    elif policy == "top_liked":
        others.sort(key=lambda j: (-comments[j].likes, j))
    else:
        raise ValueError(f"unknown surrounding selection policy {policy!r}")
    return sorted(others[:k])


def make_instances(news: NewsExample, k: int, policy: str = "position") -> list[TrainingInstance]:
    out = []
    for i, c in enumerate(news.comments):
        picked = select_surroundings(news.comments, i, k, policy)
        out.append(TrainingInstance(c, news.title, news.abstract,
                                    [news.comments[j].text for j in picked], news.news_type))
    return out


def instances_for(news: Iterable[NewsExample], k: int, policy: str = "position") -> list[TrainingInstance]:
    return [inst for n in news for inst in make_instances(n, k, policy)]


# splits

def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [math.floor(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:total - sum(counts)]:
        counts[i] += 1
    return counts


def split(news: Sequence[NewsExample], fractions: Sequence[float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> tuple[list[NewsExample], list[NewsExample], list[NewsExample]]:
    """Shuffle news items under ``seed`` and cut into train/valid/test by item."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three non-negative values summing to 1, got {fractions}")
    order = np.random.default_rng(seed).permutation(len(news))
    n_train, n_valid, _ = largest_remainder(len(news), fractions)
    items = [news[i] for i in order]
    return items[:n_train], items[n_train:n_train + n_valid], items[n_train + n_valid:]
