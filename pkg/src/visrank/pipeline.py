"""Glue between file-level artefacts and the in-memory training/evaluation API."""

from __future__ import annotations

import logging
from typing import Mapping

import numpy as np

from visrank.letor import FoldAssignment, LetorRecord
from visrank.model import ArchitectureSpec, RankingNetwork, build_model
from visrank.text import (
    Bm25Params,
    ContentFeatureVector,
    N_FEATURES,
    TokenizedDocument,
    build_corpus_stats,
    extract_content_features,
    log_transform,
    normalize_per_query,
    tokenize,
)
from visrank.training import RankingSet, TrainConfig, TrainingLog, fit_network, pair_indices

logger = logging.getLogger(__name__)


def build_feature_files(
    docs: list[TokenizedDocument],
    queries: Mapping[str, str],
    qrels: Mapping[tuple[str, str], int],
    pagerank: Mapping[str, float],
    params: Bm25Params = Bm25Params(),
) -> dict[str, list[LetorRecord]]:
    """Raw, logged and per-query normalised LETOR records for every judgment."""
    stats = build_corpus_stats(docs)
    by_id = {d.doc_id: d for d in docs}
    keys = sorted(qrels)
    raw, logged = [], []
    for q, d in keys:
        if q not in queries:
            raise KeyError(f"judged query {q!r} has no query text")
        if d in by_id:
            if d not in pagerank:
                logger.warning("no pagerank for %s; using 0", d)
            vec = extract_content_features(tokenize(queries[q]), by_id[d], stats, pagerank.get(d, 0.0), params)
        else:
            logger.warning("judged document %s (query %s) missing from corpus; features set to 0", d, q)
            vec = ContentFeatureVector(np.zeros(N_FEATURES), "raw")
        raw.append(vec)
        logged.append(log_transform(vec))
    normalized = normalize_per_query([(q, d, v) for (q, d), v in zip(keys, logged)])

    def records(vectors):
        return [LetorRecord(qrels[k], k[0], tuple(v.values.tolist()), k[1]) for k, v in zip(keys, vectors)]

    return {
        "raw": records(raw),
        "logged": records(logged),
        "normalized": records([v for _, _, v in normalized]),
    }


def ranking_set(records: list[LetorRecord], vectors: Mapping[str, np.ndarray] | None = None) -> RankingSet:
    visual = None
    if vectors is not None:
        missing = [r.doc_id for r in records if r.doc_id not in vectors]
        if missing:
            raise KeyError(f"missing visual vector for doc {missing[0]!r} ({len(missing)} total)")
        visual = np.array([np.asarray(vectors[r.doc_id], dtype=np.float64) for r in records])
    return RankingSet(
        np.array([r.query_id for r in records]),
        np.array([r.doc_id for r in records]),
        np.array([r.grade for r in records]),
        np.array([r.features for r in records], dtype=np.float64),
        visual,
    )


def fold_sets(data: RankingSet, assignment: FoldAssignment, fold: int):
    train_q, val_q, test_q = assignment.split(fold)
    return data.for_queries(train_q), data.for_queries(val_q), data.for_queries(test_q)


def train_fold(
    data: RankingSet,
    assignment: FoldAssignment,
    fold: int,
    spec: ArchitectureSpec,
    config: TrainConfig,
) -> tuple[RankingNetwork, TrainingLog]:
    train, val, _ = fold_sets(data, assignment, fold)
    if spec.head_kind == "none":
        train.visual = val.visual = None
    pairs = pair_indices(train.qid, train.grade, config.exclude_junk)
    model = build_model(spec, seed=config.seed)
    return fit_network(model, train, pairs, config, val)


def score_set(model: RankingNetwork, data: RankingSet) -> dict[str, dict[str, float]]:
    visual = data.visual if model.head else None
    scores = model.predict(visual, data.content)
    run: dict[str, dict[str, float]] = {}
    for q, d, s in zip(data.qid.tolist(), data.doc_id.tolist(), scores.tolist()):
        run.setdefault(q, {})[d] = s
    return run
