"""Ranking metrics (P@k, NDCG@k, AP) and the two-tailed paired t-test.

Relevance is graded on {-2, 0, 1, 2, 3, 4}. A document counts as relevant
for precision and AP when its grade is >= 1. NDCG uses gain
``2 ** max(g, 0) - 1`` so junk pages earn nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc

RELEVANT = 1
ALPHA = 0.05
REPORT_METRICS = ("p@1", "p@10", "ndcg@1", "ndcg@10", "map")


def precision_at_k(grades: Sequence[int], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(1 for g in grades[:k] if g >= RELEVANT) / k


def _dcg(grades: Iterable[int], k: int) -> float:
    total = 0.0
    for i, g in enumerate(grades):
        if i >= k:
            break
        total += (2.0 ** max(g, 0) - 1.0) / math.log2(i + 2)
    return total


def ndcg_at_k(grades: Sequence[int], k: int, judged: Iterable[int] | None = None) -> float:
    """NDCG@k of a ranking; the ideal is built from ``judged`` (all judged grades).

    When ``judged`` is omitted, the ranking itself is taken as the judged set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pool = list(grades) if judged is None else list(judged)
    ideal = _dcg(sorted(pool, reverse=True), k)
    if ideal == 0:
        return 0.0
    return _dcg(grades, k) / ideal


def average_precision(grades: Sequence[int], judged: Iterable[int] | None = None) -> float:
    """Average precision normalised by the number of relevant judged documents."""
    pool = list(grades) if judged is None else list(judged)
    n_rel = sum(1 for g in pool if g >= RELEVANT)
    if n_rel == 0:
        return 0.0
    hits = 0
    total = 0.0
    for i, g in enumerate(grades, 1):
        if g >= RELEVANT:
            hits += 1
            total += hits / i
    return total / n_rel


@dataclass
class QueryMetrics:
    query_id: str
    p_at: dict[int, float] = field(default_factory=dict)
    ndcg_at: dict[int, float] = field(default_factory=dict)
    ap: float = 0.0

    def as_row(self) -> dict[str, float]:
        row = {f"p@{k}": v for k, v in self.p_at.items()}
        row.update({f"ndcg@{k}": v for k, v in self.ndcg_at.items()})
        row["map"] = self.ap
        return row


def rank_documents(scores: Mapping[str, float]) -> list[str]:
    """Doc ids by descending score; ties broken by ascending doc id."""
    return sorted(scores, key=lambda d: (-scores[d], d))


def evaluate_query(query_id, ranking: Sequence[str], judgments: Mapping[str, int], ks=(1, 10)) -> QueryMetrics:
    grades = [judgments.get(d, 0) for d in ranking]
    judged = list(judgments.values())
    return QueryMetrics(
        query_id,
        {k: precision_at_k(grades, k) for k in ks},
        {k: ndcg_at_k(grades, k, judged) for k in ks},
        average_precision(grades, judged),
    )


def evaluate_run(run: Mapping[str, Mapping[str, float]], qrels: Mapping[str, Mapping[str, int]], ks=(1, 10)):
    """Per-query metrics for ``run`` (query -> doc -> score), ordered by query id."""
    return [
        evaluate_query(q, rank_documents(run[q]), qrels.get(q, {}), ks)
        for q in sorted(run)
    ]


def aggregate(per_query: Sequence[QueryMetrics]) -> dict[str, float]:
    if not per_query:
        return {}
    rows = [m.as_row() for m in per_query]
    return {key: float(np.mean([r[key] for r in rows])) for key in rows[0]}


@dataclass(frozen=True)
class TTestResult:
    n: int
    mean_diff: float
    t_statistic: float
    degrees_of_freedom: int
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value <= ALPHA


def student_t_two_tailed(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest(a, b) -> TTestResult:
    """Two-tailed paired t-test of ``a - b``.

    ``a`` and ``b`` are either aligned sequences or mappings keyed by query id,
    in which case both must cover the same queries.
    """
    if isinstance(a, Mapping) or isinstance(b, Mapping):
        if not (isinstance(a, Mapping) and isinstance(b, Mapping)):
            raise TypeError("both samples must be mappings or both sequences")
        if set(a) != set(b):
            raise ValueError("samples cover different query sets")
        keys = sorted(a)
        a, b = [a[k] for k in keys], [b[k] for k in keys]
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = d.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0:
        if mean != 0:
            raise ValueError("degenerate: identical variance (all differences equal and nonzero)")
        return TTestResult(n, 0.0, 0.0, n - 1, 1.0)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(n, mean, t, n - 1, student_t_two_tailed(t, n - 1))


def read_run(lines: Iterable[str]) -> dict[str, dict[str, float]]:
    """Parse ``query_id<TAB>doc_id<TAB>rank<TAB>score`` lines."""
    run: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 tab-separated fields")
        q, d, _, s = parts
        run.setdefault(q, {})[d] = float(s)
    return run


def format_run(run: Mapping[str, Mapping[str, float]]) -> str:
    lines = []
    for q in sorted(run):
        for rank, d in enumerate(rank_documents(run[q]), 1):
            lines.append(f"{q}\t{d}\t{rank}\t{run[q][d]!r}")
    return "".join(line + "\n" for line in lines)


def format_per_query(per_query: Sequence[QueryMetrics]) -> str:
    header = "query_id\t" + "\t".join(REPORT_METRICS)
    lines = [header]
    for m in per_query:
        row = m.as_row()
        lines.append(m.query_id + "\t" + "\t".join(f"{row[k]:.6f}" for k in REPORT_METRICS))
    agg = aggregate(per_query)
    lines.append("all\t" + "\t".join(f"{agg[k]:.6f}" for k in REPORT_METRICS))
    return "\n".join(lines) + "\n"


def format_report(systems: Mapping[str, Sequence[QueryMetrics]], baseline: str | None = None) -> str:
    """Systems x metrics table. With a baseline, ``*`` marks p <= 0.05 against it."""
    lines = ["system\t" + "\t".join(REPORT_METRICS)]
    base = None
    if baseline is not None:
        base = {m.query_id: m.as_row() for m in systems[baseline]}
    for name, per_query in systems.items():
        agg = aggregate(per_query)
        cells = []
        for key in REPORT_METRICS:
            cell = f"{agg[key]:.3f}"
            if base is not None and name != baseline:
                mine = {m.query_id: m.as_row()[key] for m in per_query}
                theirs = {q: row[key] for q, row in base.items()}
                if set(mine) != set(theirs):
                    raise ValueError(f"{name!r} and {baseline!r} cover different queries")
                try:
                    if paired_ttest(mine, theirs).significant:
                        cell += "*"
                except ValueError:
                    pass
            cells.append(cell)
        lines.append(name + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"
