"""Content features computed from fielded documents.

Eleven query-document features are produced, in this order:

    1  PageRank (scaled by 1e5)     7  title length
    2  content length               8  title TF
    3  content TF                   9  title IDF
    4  content IDF                 10  title TF-IDF
    5  content TF-IDF              11  title BM25
    6  content BM25

followed by a ``log1p`` transform and per-query min-max normalisation.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FIELDS = ("title", "content")
FEATURE_NAMES = (
    "pagerank",
    "content_length",
    "content_tf",
    "content_idf",
    "content_tfidf",
    "content_bm25",
    "title_length",
    "title_tf",
    "title_idf",
    "title_tfidf",
    "title_bm25",
)
N_FEATURES = len(FEATURE_NAMES)
PAGERANK_SCALE = 1e5
STAGES = ("raw", "logged", "normalized")

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TokenizedDocument:
    doc_id: str
    title_tokens: tuple[str, ...] = ()
    content_tokens: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        object.__setattr__(self, "title_tokens", tuple(self.title_tokens))
        object.__setattr__(self, "content_tokens", tuple(self.content_tokens))

    @classmethod
    def from_text(cls, doc_id: str, title: str, content: str) -> "TokenizedDocument":
        return cls(doc_id, tuple(tokenize(title)), tuple(tokenize(content)))

    def tokens(self, field_name: str) -> tuple[str, ...]:
        if field_name == "title":
            return self.title_tokens
        if field_name == "content":
            return self.content_tokens
        raise KeyError(f"unknown field {field_name!r}")


@dataclass
class CorpusStats:
    """Collection statistics per field: document frequencies and lengths."""

    n_docs: int
    df: dict[str, Counter] = field(default_factory=dict)
    total_len: dict[str, int] = field(default_factory=dict)

    @property
    def avgdl(self) -> dict[str, float]:
        return {f: self.total_len[f] / self.n_docs for f in self.total_len}

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        """Associative merge, used when statistics are built in shards."""
        return CorpusStats(
            self.n_docs + other.n_docs,
            {f: self.df[f] + other.df[f] for f in FIELDS},
            {f: self.total_len[f] + other.total_len[f] for f in FIELDS},
        )


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 2.5
    k3: float = 0.0
    b: float = 0.8

    def __post_init__(self):
        if self.k1 < 0 or self.k3 < 0 or not 0 <= self.b <= 1:
            raise ValueError(f"invalid BM25 parameters {self}")


@dataclass
class ContentFeatureVector:
    values: np.ndarray
    stage: str = "raw"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got shape {self.values.shape}")
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")


def build_corpus_stats(docs: Iterable[TokenizedDocument]) -> CorpusStats:
    n = 0
    df = {f: Counter() for f in FIELDS}
    total = dict.fromkeys(FIELDS, 0)
    for doc in docs:
        n += 1
        for f in FIELDS:
            toks = doc.tokens(f)
            df[f].update(set(toks))
            total[f] += len(toks)
    if n == 0:
        raise ValueError("empty corpus")
    return CorpusStats(n, df, total)


def _unique(terms: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(terms))


def sum_tf(query_terms: Sequence[str], tokens: Sequence[str]) -> float:
    counts = Counter(tokens)
    return float(sum(counts[t] for t in _unique(query_terms)))


def idf(token: str, field_name: str, stats: CorpusStats) -> float:
    """Robertson-Sparck Jones IDF with 0.5 smoothing, floored at zero."""
    n = stats.n_docs
    df = stats.df[field_name].get(token, 0)
    return max(0.0, math.log((n - df + 0.5) / (df + 0.5)))


def bm25(
    query_terms: Sequence[str],
    tokens: Sequence[str],
    stats: CorpusStats,
    params: Bm25Params = Bm25Params(),
    field_name: str = "content",
) -> float:
    avgdl = stats.avgdl[field_name]
    if avgdl == 0:
        raise ValueError(f"degenerate field {field_name!r}: average length is 0")
    counts = Counter(tokens)
    qtf = Counter(query_terms)
    norm = 1.0 - params.b + params.b * len(tokens) / avgdl
    score = 0.0
    for t in _unique(query_terms):
        tf = counts[t]
        if tf == 0:
            continue
        doc_part = tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
        query_part = (params.k3 + 1.0) * qtf[t] / (params.k3 + qtf[t])
        score += idf(t, field_name, stats) * doc_part * query_part
    return score


def _field_features(query_terms, tokens, field_name, stats, params):
    # an absent field (e.g. no title) yields all-zero features, IDF included
    if not tokens:
        return [0.0] * 5
    terms = _unique(query_terms)
    counts = Counter(tokens)
    idfs = [idf(t, field_name, stats) for t in terms]
    tf = float(sum(counts[t] for t in terms))
    tfidf = float(sum(counts[t] * w for t, w in zip(terms, idfs)))
    score = bm25(query_terms, tokens, stats, params, field_name)
    return [float(len(tokens)), tf, float(sum(idfs)), tfidf, score]


def extract_content_features(
    query_terms: Sequence[str],
    doc: TokenizedDocument,
    stats: CorpusStats,
    pagerank: float = 0.0,
    params: Bm25Params = Bm25Params(),
) -> ContentFeatureVector:
    if pagerank < 0:
        raise ValueError("pagerank must be non-negative")
    values = [pagerank * PAGERANK_SCALE]
    values += _field_features(query_terms, doc.content_tokens, "content", stats, params)
    values += _field_features(query_terms, doc.title_tokens, "title", stats, params)
    return ContentFeatureVector(np.array(values), "raw")


def log_transform(vector: ContentFeatureVector) -> ContentFeatureVector:
    if vector.stage != "raw":
        raise ValueError(f"log transform expects a raw vector, got {vector.stage!r}")
    return ContentFeatureVector(np.log1p(np.clip(vector.values, 0.0, None)), "logged")


def minmax_by_query(X, qid) -> np.ndarray:
    """Min-max scale each column of ``X`` within every query group.

    Columns that are constant within a query map to 0.
    """
    X = np.asarray(X, dtype=np.float64)
    qid = np.asarray(qid)
    out = np.zeros_like(X)
    for q in np.unique(qid):
        rows = qid == q
        block = X[rows]
        lo = block.min(axis=0)
        span = block.max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        out[rows] = np.where(span > 0, (block - lo) / safe, 0.0)
    return out


def normalize_per_query(rows):
    """Normalise ``(query_id, doc_id, logged vector)`` rows per query."""
    rows = list(rows)
    for _, _, vec in rows:
        if vec.stage != "logged":
            raise ValueError(f"normalisation expects logged vectors, got {vec.stage!r}")
    if not rows:
        return []
    X = np.stack([vec.values for _, _, vec in rows])
    scaled = minmax_by_query(X, [q for q, _, _ in rows])
    return [
        (q, d, ContentFeatureVector(v, "normalized"))
        for (q, d, _), v in zip(rows, scaled)
    ]


def read_corpus(lines: Iterable[str]) -> list[TokenizedDocument]:
    """Read ``doc_id<TAB>title<TAB>content`` records."""
    docs = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
        doc_id, title, content = parts
        if doc_id in seen:
            raise ValueError(f"line {lineno}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        docs.append(TokenizedDocument.from_text(doc_id, title, content))
    return docs


def read_two_column(lines: Iterable[str], what: str = "record") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: malformed {what} line")
        out[parts[0]] = parts[1]
    return out


def read_pagerank(lines: Iterable[str]) -> dict[str, float]:
    out = {}
    for doc_id, value in read_two_column(lines, "pagerank").items():
        score = float(value)
        if score < 0:
            raise ValueError(f"negative pagerank for {doc_id!r}")
        out[doc_id] = score
    return out
