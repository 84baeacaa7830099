"""LETOR feature files, TREC qrels and query-level fold assignment."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

GRADES = frozenset({-2, 0, 1, 2, 3, 4})
N_FOLDS = 5
PRNG_NAME = "numpy.PCG64/v1"

_DOCID_RE = re.compile(r"#\s*docid\s*=\s*(\S+)\s*$")


class LetorParseError(ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno is not None else ""
        super().__init__(prefix + message)


def check_grade(value: int) -> int:
    if value not in GRADES:
        raise ValueError(f"invalid grade {value}")
    return value


@dataclass(frozen=True)
class LetorRecord:
    grade: int
    query_id: str
    features: tuple[float, ...]
    doc_id: str

    def __post_init__(self):
        check_grade(self.grade)
        if not self.features:
            raise ValueError("record has no features")
        if not self.doc_id or any(c.isspace() for c in self.doc_id):
            raise ValueError(f"invalid doc_id {self.doc_id!r}")
        if not self.query_id or any(c.isspace() for c in self.query_id):
            raise ValueError(f"invalid query_id {self.query_id!r}")
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))


def parse_letor(line: str, lineno: int | None = None) -> LetorRecord:
    """Parse ``<grade> qid:<qid> 1:<v> 2:<v> ... #docid = <id>``."""
    m = _DOCID_RE.search(line)
    if m is None:
        raise LetorParseError("missing '#docid = <id>' comment", lineno)
    doc_id = m.group(1)
    body = line[: m.start()].split()
    if len(body) < 3:
        raise LetorParseError("expected grade, qid and at least one feature", lineno)
    try:
        grade = int(body[0])
    except ValueError:
        raise LetorParseError(f"malformed grade {body[0]!r}", lineno) from None
    if grade not in GRADES:
        raise LetorParseError(f"invalid grade {grade}", lineno)
    if not body[1].startswith("qid:") or len(body[1]) == 4:
        raise LetorParseError(f"malformed qid field {body[1]!r}", lineno)
    qid = body[1][4:]
    features = []
    for expected, token in enumerate(body[2:], 1):
        fid, sep, value = token.partition(":")
        if not sep:
            raise LetorParseError(f"malformed feature {token!r}", lineno)
        try:
            fid_num = int(fid)
            val = float(value)
        except ValueError:
            raise LetorParseError(f"malformed feature {token!r}", lineno) from None
        if fid_num != expected:
            raise LetorParseError("non-dense feature ids", lineno)
        features.append(val)
    return LetorRecord(grade, qid, tuple(features), doc_id)


def emit_letor(record: LetorRecord) -> str:
    # repr() of a float is the shortest string that round-trips exactly
    feats = " ".join(f"{i}:{v!r}" for i, v in enumerate(record.features, 1))
    return f"{record.grade} qid:{record.query_id} {feats} #docid = {record.doc_id}"


def read_letor(lines: Iterable[str]) -> list[LetorRecord]:
    records = []
    for lineno, line in enumerate(lines, 1):
        if line.strip():
            records.append(parse_letor(line.rstrip("\n"), lineno))
    if records:
        widths = {len(r.features) for r in records}
        if len(widths) > 1:
            raise ValueError(f"inconsistent feature counts {sorted(widths)}")
    return records


def format_letor(records: Iterable[LetorRecord]) -> str:
    return "".join(emit_letor(r) + "\n" for r in records)


def parse_qrels(lines: Iterable[str]) -> dict[tuple[str, str], int]:
    """Parse TREC qrels ``<topic> <iter> <docid> <grade>``; later duplicates win."""
    qrels: dict[tuple[str, str], int] = {}
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise LetorParseError(f"expected 4 fields, got {len(parts)}", lineno)
        topic, _, doc_id, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError:
            raise LetorParseError(f"malformed grade {grade_text!r}", lineno) from None
        if grade not in GRADES:
            raise LetorParseError(f"invalid grade {grade}", lineno)
        key = (topic, doc_id)
        if key in qrels and qrels[key] != grade:
            logger.warning(
                "line %d: duplicate judgment for %s/%s (%d -> %d)",
                lineno, topic, doc_id, qrels[key], grade,
            )
        qrels[key] = grade
    return qrels


def format_qrels(qrels: Mapping[tuple[str, str], int]) -> str:
    return "".join(f"{q} 0 {d} {g}\n" for (q, d), g in qrels.items())


def qrels_by_query(qrels: Mapping[tuple[str, str], int]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for (q, d), g in qrels.items():
        out.setdefault(q, {})[d] = g
    return out


@dataclass(frozen=True)
class Fold:
    train: tuple[int, int, int]
    validation: int
    test: int


@dataclass(frozen=True)
class FoldAssignment:
    partitions: dict[str, int]
    folds: tuple[Fold, ...]
    seed: int | None = None

    def queries(self, partitions: Iterable[int]) -> list[str]:
        wanted = set(partitions)
        return [q for q, p in self.partitions.items() if p in wanted]

    def split(self, fold: int) -> tuple[list[str], list[str], list[str]]:
        """Query ids of the train, validation and test sets of ``fold``."""
        f = self.folds[fold]
        return self.queries(f.train), self.queries([f.validation]), self.queries([f.test])


def rotate_folds(n: int = N_FOLDS) -> tuple[Fold, ...]:
    folds = []
    for p in range(n):
        val = (p + 1) % n
        train = tuple(sorted(set(range(n)) - {p, val}))
        folds.append(Fold(train, val, p))
    return tuple(folds)


def split_folds(query_ids: Sequence[str], seed: int = 0) -> FoldAssignment:
    """Shuffle queries with a seeded PRNG and deal them into five partitions.

    Queries are sorted first, so the result depends only on the query set.
    """
    unique = sorted(set(query_ids))
    if len(unique) < N_FOLDS:
        raise ValueError(f"need at least {N_FOLDS} queries, got {len(unique)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(unique))
    partitions = {unique[i]: rank % N_FOLDS for rank, i in enumerate(order)}
    return FoldAssignment(partitions, rotate_folds(), seed)


def format_fold_manifest(assignment: FoldAssignment) -> str:
    lines = [f"# prng = {PRNG_NAME} seed = {assignment.seed}"]
    lines += [f"{q}\t{p}" for q, p in assignment.partitions.items()]
    return "\n".join(lines) + "\n"


def read_fold_manifest(lines: Iterable[str]) -> FoldAssignment:
    partitions = {}
    seed = None
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if line.startswith("#"):
            m = re.search(r"seed\s*=\s*(-?\d+)", line)
            if m:
                seed = int(m.group(1))
            continue
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[1].isdigit() or int(parts[1]) >= N_FOLDS:
            raise LetorParseError("malformed fold manifest line", lineno)
        partitions[parts[0]] = int(parts[1])
    return FoldAssignment(partitions, rotate_folds(), seed)
