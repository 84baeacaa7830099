import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import oracle_bm25
from visrank.text import (
    Bm25Params,
    ContentFeatureVector,
    TokenizedDocument,
    bm25,
    build_corpus_stats,
    extract_content_features,
    idf,
    log_transform,
    minmax_by_query,
    normalize_per_query,
    read_corpus,
    sum_tf,
    tokenize,
)

MICRO = {"d1": "a b a", "d2": "b c", "d3": "a d d"}


def micro_docs():
    return [TokenizedDocument(d, (), tuple(text.split())) for d, text in MICRO.items()]


def test_tokenize():
    assert tokenize("Hello, World! foo_bar 42x") == ["hello", "world", "foo", "bar", "42x"]
    assert tokenize("") == []


def test_corpus_stats_micro():
    stats = build_corpus_stats(micro_docs())
    assert stats.n_docs == 3
    assert dict(stats.df["content"]) == {"a": 2, "b": 2, "c": 1, "d": 1}
    assert stats.avgdl["content"] == pytest.approx(8 / 3)
    assert stats.avgdl["title"] == 0
    assert not stats.df["title"]


def test_corpus_stats_single_and_empty():
    stats = build_corpus_stats([TokenizedDocument("x", (), ("x",))])
    assert stats.df["content"]["x"] == 1
    assert stats.avgdl["content"] == 1
    with pytest.raises(ValueError, match="empty corpus"):
        build_corpus_stats([])


def test_corpus_stats_merge_matches_single_pass():
    docs = micro_docs()
    merged = build_corpus_stats(docs[:1]).merge(build_corpus_stats(docs[1:]))
    whole = build_corpus_stats(docs)
    assert merged.df == whole.df and merged.total_len == whole.total_len and merged.n_docs == 3


@pytest.mark.parametrize("query,expected", [(["a"], 2), (["a", "b"], 3), (["z"], 0), (["a", "a"], 2)])
def test_sum_tf(query, expected):
    assert sum_tf(query, "a b a".split()) == expected


def test_idf_values():
    stats = build_corpus_stats(micro_docs())
    assert idf("c", "content", stats) == pytest.approx(math.log(2.5 / 1.5), abs=1e-12)
    assert idf("a", "content", stats) == 0.0
    assert idf("zzz", "content", stats) == pytest.approx(math.log(3.5 / 0.5), abs=1e-12)
    assert idf("c", "content", stats) == pytest.approx(0.5108, abs=1e-4)
    assert idf("zzz", "content", stats) == pytest.approx(1.9459, abs=1e-4)


def test_bm25_against_oracle():
    stats = build_corpus_stats(micro_docs())
    d3 = micro_docs()[2]
    got = bm25(["d"], d3.content_tokens, stats)
    assert got == pytest.approx(oracle_bm25(["d"], "d3", MICRO), abs=1e-12)
    assert got == pytest.approx(0.7528, abs=1e-4)
    assert bm25(["a"], d3.content_tokens, stats) == 0.0
    assert bm25(["c"], d3.content_tokens, stats) == 0.0


def test_bm25_degenerate_field():
    stats = build_corpus_stats(micro_docs())
    with pytest.raises(ValueError, match="degenerate field"):
        bm25(["a"], (), stats, field_name="title")


def test_bm25_params_validation():
    with pytest.raises(ValueError):
        Bm25Params(k1=-1)
    with pytest.raises(ValueError):
        Bm25Params(b=1.5)


def test_bm25_k3_zero_ignores_query_frequency():
    stats = build_corpus_stats(micro_docs())
    toks = micro_docs()[2].content_tokens
    assert bm25(["d", "d", "d"], toks, stats) == bm25(["d"], toks, stats)
    # with k3 > 0 repeated query terms do count
    k3 = Bm25Params(k3=5.0)
    assert bm25(["d", "d", "d"], toks, stats, k3) > bm25(["d"], toks, stats, k3)


def test_extract_content_features():
    docs = [
        TokenizedDocument.from_text("d1", "A title", "a b a"),
        TokenizedDocument.from_text("d2", "", "b c"),
        TokenizedDocument.from_text("d3", "d", "a d d"),
    ]
    stats = build_corpus_stats(docs)
    v = extract_content_features(["d"], docs[2], stats, pagerank=2e-6)
    assert v.stage == "raw"
    assert v.values[0] == pytest.approx(0.2)
    assert v.values[1] == 3  # content length
    assert v.values[2] == 2  # content tf
    assert v.values[3] == pytest.approx(math.log(2.5 / 1.5))
    assert v.values[4] == pytest.approx(2 * math.log(2.5 / 1.5))
    assert v.values[5] == pytest.approx(oracle_bm25(["d"], "d3", MICRO), abs=1e-12)
    assert v.values[6] == 1  # title length

    no_title = extract_content_features(["b"], docs[1], stats)
    assert np.all(no_title.values[6:] == 0)

    empty_q = extract_content_features([], docs[0], stats)
    assert np.all(empty_q.values[[2, 3, 4, 5, 7, 8, 9, 10]] == 0)
    assert empty_q.values[1] == 3 and empty_q.values[6] == 2


def test_extract_content_features_is_pure():
    docs = micro_docs()
    stats = build_corpus_stats(docs)
    a = extract_content_features(["a", "d"], docs[2], stats, 1e-6)
    b = extract_content_features(["a", "d"], docs[2], stats, 1e-6)
    assert a.values.tobytes() == b.values.tobytes()


def test_extract_rejects_negative_pagerank():
    docs = micro_docs()
    with pytest.raises(ValueError):
        extract_content_features(["a"], docs[0], build_corpus_stats(docs), -1.0)


def test_log_transform():
    raw = ContentFeatureVector(np.array([0, math.e - 1, -0.5] + [0] * 8), "raw")
    out = log_transform(raw)
    assert out.stage == "logged"
    assert out.values[:3] == pytest.approx([0, 1, 0])
    with pytest.raises(ValueError):
        log_transform(out)


def test_normalize_per_query():
    def logged(x):
        return ContentFeatureVector(np.full(11, float(x)), "logged")

    rows = [("q1", "a", logged(1)), ("q1", "b", logged(3)), ("q2", "c", logged(5)), ("q2", "d", logged(5)),
            ("q3", "e", logged(1)), ("q3", "f", logged(2)), ("q3", "g", logged(3))]
    out = normalize_per_query(rows)
    col = [v.values[0] for _, _, v in out]
    assert col == [0, 1, 0, 0, 0, 0.5, 1]
    assert all(v.stage == "normalized" for _, _, v in out)
    with pytest.raises(ValueError):
        normalize_per_query([("q", "a", ContentFeatureVector(np.zeros(11), "raw"))])


def test_content_vector_invariants():
    with pytest.raises(ValueError):
        ContentFeatureVector(np.zeros(10))
    with pytest.raises(ValueError):
        ContentFeatureVector(np.zeros(11), "cooked")


def test_read_corpus():
    docs = read_corpus(["d1\tThe Title\tSome content here", "", "d2\t\tbody"])
    assert docs[0].title_tokens == ("the", "title")
    assert docs[1].title_tokens == ()
    with pytest.raises(ValueError, match="line 1"):
        read_corpus(["only\ttwo"])
    with pytest.raises(ValueError, match="duplicate"):
        read_corpus(["d\ta\tb", "d\tc\td"])


words = st.lists(st.sampled_from(list("abcdef")), max_size=8)


@settings(max_examples=60, deadline=None)
@given(st.lists(words, min_size=1, max_size=6), words)
def test_df_monotone_and_bm25_nonnegative(texts, extra):
    docs = [TokenizedDocument(f"d{i}", (), tuple(t)) for i, t in enumerate(texts)]
    before = build_corpus_stats(docs)
    after = build_corpus_stats(docs + [TokenizedDocument("new", (), tuple(extra))])
    for term, count in before.df["content"].items():
        assert after.df["content"][term] >= count
        assert 1 <= count <= before.n_docs
    if before.avgdl["content"] > 0:
        for doc in docs:
            assert bm25(list("abc"), doc.content_tokens, before) >= 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=12), st.integers(1, 3))
def test_minmax_preserves_order_and_range(values, n_queries):
    qid = [i % n_queries for i in range(len(values))]
    out = minmax_by_query(np.array(values)[:, None], qid)[:, 0]
    assert np.all((out >= 0) & (out <= 1))
    for q in set(qid):
        rows = [i for i, x in enumerate(qid) if x == q]
        for i in rows:
            for j in rows:
                if values[i] < values[j]:
                    assert out[i] <= out[j]
                if values[i] == values[j]:
                    assert out[i] == out[j]
