"""Pairwise hinge-loss training with Adam and validation-based model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from visrank import nn
from visrank.letor import check_grade
from visrank.metrics import ndcg_at_k
from visrank.model import DEFAULT_LEARNING_RATE, RankingNetwork

logger = logging.getLogger(__name__)

JUNK = -2


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float | None = None  # None: per-head default
    batch_size: int = 100
    max_epochs: int = 100
    patience: int = 5
    margin: float = 1.0
    l2_lambda: float = 1e-5
    seed: int = 0
    exclude_junk: bool = False

    def __post_init__(self):
        if self.learning_rate is not None and self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.margin <= 0 or self.l2_lambda < 0:
            raise ValueError("margin must be positive and l2_lambda non-negative")

    def resolved_lr(self, head_kind: str) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_LEARNING_RATE[head_kind]


@dataclass(frozen=True)
class PreferencePair:
    query_id: str
    pos_doc_id: str
    neg_doc_id: str


def enumerate_pairs(judgments: Mapping, exclude_junk: bool = False) -> list[PreferencePair]:
    """All within-query ordered pairs whose grades differ strictly.

    ``judgments`` maps query id -> {doc id: grade}, or (query id, doc id) -> grade.
    """
    if judgments and isinstance(next(iter(judgments)), tuple):
        grouped: dict = {}
        for (q, d), g in judgments.items():
            grouped.setdefault(q, {})[d] = g
        judgments = grouped
    pairs = []
    for q, docs in judgments.items():
        items = [(d, check_grade(g)) for d, g in docs.items()]
        if exclude_junk:
            items = [(d, g) for d, g in items if g != JUNK]
        for i, (d1, g1) in enumerate(items):
            for d2, g2 in items[i + 1:]:
                if g1 > g2:
                    pairs.append(PreferencePair(q, d1, d2))
                elif g2 > g1:
                    pairs.append(PreferencePair(q, d2, d1))
    return pairs


def pair_indices(qid, y, exclude_junk=False) -> np.ndarray:
    """Row-index version of ``enumerate_pairs`` over aligned ``qid``/``y`` arrays."""
    qid = np.asarray(qid)
    y = np.asarray(y)
    out = []
    for q in dict.fromkeys(qid.tolist()):
        rows = np.flatnonzero(qid == q)
        if exclude_junk:
            rows = rows[y[rows] != JUNK]
        g = y[rows]
        hi, lo = np.nonzero(g[:, None] > g[None, :])
        out.append(np.column_stack([rows[hi], rows[lo]]))
    if not out:
        return np.empty((0, 2), dtype=np.intp)
    return np.concatenate(out).astype(np.intp)


@dataclass
class RankingSet:
    """Aligned per-document arrays for one group of queries."""

    qid: np.ndarray
    doc_id: np.ndarray
    grade: np.ndarray
    content: np.ndarray
    visual: np.ndarray | None = None

    def __post_init__(self):
        self.qid = np.asarray(self.qid)
        self.doc_id = np.asarray(self.doc_id)
        self.grade = np.asarray(self.grade)
        self.content = np.atleast_2d(np.asarray(self.content, dtype=np.float64))
        if self.visual is not None:
            self.visual = np.atleast_2d(np.asarray(self.visual, dtype=np.float64))
        n = len(self.qid)
        lengths = {len(self.doc_id), len(self.grade), len(self.content)}
        if self.visual is not None:
            lengths.add(len(self.visual))
        if lengths != {n}:
            raise ValueError("ranking set arrays have mismatched lengths")

    def __len__(self):
        return len(self.qid)

    def subset(self, rows) -> "RankingSet":
        return RankingSet(
            self.qid[rows], self.doc_id[rows], self.grade[rows], self.content[rows],
            None if self.visual is None else self.visual[rows],
        )

    def for_queries(self, queries) -> "RankingSet":
        return self.subset(np.isin(self.qid, list(queries)))


def mean_ndcg(scores, data: RankingSet, k=10) -> float:
    """Mean NDCG@k over queries, ranking by score with doc-id tie-breaking."""
    values = []
    for q in np.unique(data.qid):
        rows = np.flatnonzero(data.qid == q)
        order = sorted(rows, key=lambda r: (-scores[r], data.doc_id[r]))
        values.append(ndcg_at_k(data.grade[order].tolist(), k, data.grade[rows].tolist()))
    return float(np.mean(values)) if values else 0.0


@dataclass
class TrainingLog:
    epochs: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    touched_queries: set = field(default_factory=set)
    n_updates: int = 0

    def format(self) -> str:
        return "".join(f"{e}\t{loss!r}\t{ndcg!r}\n" for e, loss, ndcg in self.epochs)


def _pair_loss(model, data, pairs, config):
    scores = model.predict(data.visual, data.content)
    hinge = nn.pairwise_hinge_loss(scores[pairs[:, 0]], scores[pairs[:, 1]], config.margin)
    return float(hinge.mean()) + nn.l2_penalty(model.weights(), config.l2_lambda)


def fit_network(
    model: RankingNetwork,
    data: RankingSet,
    pairs: np.ndarray,
    config: TrainConfig,
    validation: RankingSet | None = None,
) -> tuple[RankingNetwork, TrainingLog]:
    """Train ``model`` in place on row-index ``pairs``; return the best copy and log.

    Epoch 0 in the log is the untrained model. Without a validation set the
    last epoch is returned.
    """
    pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("no training signal: no preference pairs")
    shuffle_seed, dropout_seed = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_seed))
    dropout_rng = np.random.Generator(np.random.PCG64(dropout_seed))
    params = model.params()
    weight_ids = {id(w) for w in model.weights()}
    state = nn.AdamState(lr=config.resolved_lr(model.spec.head_kind))
    log = TrainingLog()

    def evaluate(epoch):
        loss = _pair_loss(model, data, pairs, config)
        ndcg = float("nan")
        if validation is not None:
            ndcg = mean_ndcg(model.predict(validation.visual, validation.content), validation)
        log.epochs.append((epoch, loss, ndcg))
        logger.info("epoch %d loss %.6f val_ndcg@10 %.4f", epoch, loss, ndcg)
        return ndcg

    best_score = evaluate(0)
    best = model.copy()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(pairs))
        for start in range(0, len(order), config.batch_size):
            batch = pairs[order[start:start + config.batch_size]]
            rows = np.concatenate([batch[:, 0], batch[:, 1]])
            log.touched_queries.update(np.unique(data.qid[rows]).tolist())
            x_vf = None if data.visual is None else data.visual[rows]
            scores, tape = model.forward(x_vf, data.content[rows], train=True, rng=dropout_rng)
            m = len(batch)
            g_pos = nn.pairwise_hinge_grad(scores[:m], scores[m:], config.margin) / m
            grads = model.backward(tape, np.concatenate([g_pos, -g_pos]))
            grads = [
                g + 2.0 * config.l2_lambda * p if id(p) in weight_ids else g
                for p, g in zip(params, grads)
            ]
            nn.adam_step(params, grads, state)
            log.n_updates += 1
        ndcg = evaluate(epoch)
        if validation is None:
            best, log.best_epoch = model, epoch
            continue
        if ndcg > best_score:
            best_score, best, log.best_epoch, stale = ndcg, model.copy(), epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, log


def train(
    model: RankingNetwork,
    pairs: Sequence[PreferencePair],
    features: Mapping[tuple[str, str], np.ndarray],
    vectors: Mapping[str, np.ndarray] | None,
    config: TrainConfig,
    validation: Mapping[str, Mapping[str, int]] | None = None,
) -> tuple[RankingNetwork, TrainingLog]:
    """Train from preference pairs and keyed feature stores.

    ``features`` maps (query id, doc id) to normalised content features,
    ``vectors`` maps doc id to a cached visual vector, and ``validation`` maps
    validation query ids to their judgments.
    """
    if not pairs:
        raise ValueError("no training signal: no preference pairs")
    keys = list(dict.fromkeys(
        k for p in pairs for k in ((p.query_id, p.pos_doc_id), (p.query_id, p.neg_doc_id))
    ))
    index = {k: i for i, k in enumerate(keys)}
    data = _gather(keys, {k: 0 for k in keys}, features, vectors, model)
    idx = np.array(
        [(index[(p.query_id, p.pos_doc_id)], index[(p.query_id, p.neg_doc_id)]) for p in pairs]
    )
    val = None
    if validation:
        vkeys = [(q, d) for q in validation for d in validation[q]]
        val = _gather(vkeys, {(q, d): validation[q][d] for q, d in vkeys}, features, vectors, model)
    return fit_network(model, data, idx, config, val)


def _gather(keys, grades, features, vectors, model) -> RankingSet:
    content = []
    visual = [] if model.head else None
    for q, d in keys:
        if (q, d) not in features:
            raise KeyError(f"missing content features for query {q!r} doc {d!r}")
        content.append(features[(q, d)])
        if visual is not None:
            if vectors is None or d not in vectors:
                raise KeyError(f"missing visual vector for doc {d!r}")
            visual.append(vectors[d])
    return RankingSet(
        np.array([q for q, _ in keys]), np.array([d for _, d in keys]),
        np.array([grades[k] for k in keys]), np.array(content),
        None if visual is None else np.array(visual),
    )
