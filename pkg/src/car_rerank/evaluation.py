"""Ranking and generation quality metrics plus TREC-format interchange.

NDCG uses exponential gain (2**rel - 1) with a log2(i + 1) position
discount; the ideal ranking is computed over all judged documents for the
query, not only retrieved ones. Token F1 treats answers as token sets by
default, with a multiset option for compatibility with bag-overlap QA
evaluators.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

from .errors import (
    EmptyEvaluationSetError,
    InconsistentRankError,
    MalformedLineError,
    ZeroBaselineError,
)
from .types import RankedCandidateList, RankedEntry


@dataclass(frozen=True)
class QrelsTable:
    """Graded relevance judgments; unjudged (query, doc) pairs count as 0."""

    grades: Mapping[str, Mapping[str, int]]

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.grades.get(query_id, {}).get(doc_id, 0)

    def judged(self, query_id: str) -> Mapping[str, int]:
        return self.grades.get(query_id, {})

    def query_ids(self) -> tuple[str, ...]:
        return tuple(self.grades)

    def has_relevant(self, query_id: str) -> bool:
        return any(grade > 0 for grade in self.judged(query_id).values())


@dataclass
class RunFile:
    """A tagged set of ranked results: per query, ordered (doc_id, score) pairs."""

    run_tag: str
    rankings: dict[str, tuple[tuple[str, float], ...]] = field(default_factory=dict)

    def query_ids(self) -> tuple[str, ...]:
        return tuple(self.rankings)

    def ranking(self, query_id: str) -> tuple[tuple[str, float], ...]:
        return self.rankings.get(query_id, ())


@dataclass(frozen=True)
class MetricReport:
    """Per-query metric values and their arithmetic mean."""

    metric: str
    k: int | None
    per_query: Mapping[str, float]
    macro_avg: float


def dcg_at_k(grades: Sequence[int], k: int) -> float:
    """Discounted cumulative gain of a grade sequence over its first k positions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(
        (2**grade - 1) / math.log2(position + 2)
        for position, grade in enumerate(grades[:k])
    )


def ideal_dcg_at_k(judged: Mapping[str, int], k: int) -> float:
    """DCG of the best possible ordering of all judged documents."""
    return dcg_at_k(sorted(judged.values(), reverse=True), k)


def ndcg_at_k(run: RunFile, qrels: QrelsTable, k: int) -> MetricReport:
    """Normalized DCG at k, macro-averaged over queries that have at least
    one relevant document (NDCG is undefined when the ideal DCG is zero,
    so such queries are excluded)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    per_query: dict[str, float] = {}
    for query_id in run.query_ids():
        if not qrels.has_relevant(query_id):
            continue
        grades = [qrels.grade(query_id, doc_id) for doc_id, _ in run.ranking(query_id)]
        per_query[query_id] = dcg_at_k(grades, k) / ideal_dcg_at_k(qrels.judged(query_id), k)
    if not per_query:
        raise EmptyEvaluationSetError(
            "no evaluated query has any relevant document"
        )
    macro = sum(per_query.values()) / len(per_query)
    return MetricReport(metric="ndcg", k=k, per_query=per_query, macro_avg=macro)


def _tokens(text: str) -> list[str]:
    return text.strip().lower().split()


def token_f1(predicted: str, gold: str, *, multiset: bool = False) -> float:
    """Harmonic mean of token precision and recall between two strings.

    Tokens are whitespace-split after trimming and lowercasing and compared
    as sets; with multiset=True, repeated tokens count with multiplicity.
    Returns 0.0 whenever precision + recall is 0 (including empty inputs).
    """
    if multiset:
        pred_counts = Counter(_tokens(predicted))
        gold_counts = Counter(_tokens(gold))
        overlap = sum((pred_counts & gold_counts).values())
        pred_size = sum(pred_counts.values())
        gold_size = sum(gold_counts.values())
    else:
        pred_set = set(_tokens(predicted))
        gold_set = set(_tokens(gold))
        overlap = len(pred_set & gold_set)
        pred_size = len(pred_set)
        gold_size = len(gold_set)
    precision = overlap / pred_size if pred_size else 0.0
    recall = overlap / gold_size if gold_size else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def relative_improvement(baseline: float, treatment: float) -> float:
    """Signed percentage change of treatment over baseline."""
    if baseline <= 0:
        raise ZeroBaselineError(
            f"relative improvement needs a positive baseline, got {baseline}"
        )
    return (treatment - baseline) / baseline * 100.0


def _content_lines(stream: Iterable[str]) -> Iterable[tuple[int, str]]:
    """Yield (1-based line number, line) for non-blank, non-comment lines."""
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield line_no, line


def parse_qrels(stream: Iterable[str]) -> QrelsTable:
    """Parse TREC qrels lines: "query_id 0 doc_id grade".

    Blank lines and '#' comments are skipped; a repeated (query, doc) pair
    keeps the last grade seen.
    """
    grades: dict[str, dict[str, int]] = {}
    for line_no, line in _content_lines(stream):
        parts = line.split()
        if len(parts) != 4:
            raise MalformedLineError(line_no, f"expected 4 qrels fields, got {len(parts)}")
        query_id, _iteration, doc_id, grade_text = parts
        try:
            grade = int(grade_text)
        except ValueError:
            raise MalformedLineError(line_no, f"grade is not an integer: {grade_text!r}") from None
        if grade < 0:
            raise MalformedLineError(line_no, f"grade must be >= 0, got {grade}")
        grades.setdefault(query_id, {})[doc_id] = grade
    return QrelsTable(grades=grades)


def parse_run(stream: Iterable[str]) -> RunFile:
    """Parse TREC run lines: "query_id Q0 doc_id rank score tag".

    Ranks must be 1-based and agree with line order per query, scores must be
    non-increasing per query, and doc_ids must be unique per query.
    """
    rankings: dict[str, list[tuple[str, float]]] = {}
    seen: dict[str, set[str]] = {}
    last_score: dict[str, float] = {}
    run_tag = "run"
    for line_no, line in _content_lines(stream):
        parts = line.split()
        if len(parts) != 6:
            raise MalformedLineError(line_no, f"expected 6 run fields, got {len(parts)}")
        query_id, _q0, doc_id, rank_text, score_text, tag = parts
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError:
            raise MalformedLineError(line_no, "rank/score fields are not numeric") from None
        run_tag = tag
        entries = rankings.setdefault(query_id, [])
        if doc_id in seen.setdefault(query_id, set()):
            raise MalformedLineError(line_no, f"duplicate doc_id {doc_id!r} for query {query_id!r}")
        if rank != len(entries) + 1:
            raise InconsistentRankError(
                query_id, doc_id, f"rank {rank} at position {len(entries) + 1}"
            )
        if entries and score > last_score[query_id]:
            raise InconsistentRankError(
                query_id, doc_id, f"score {score} exceeds preceding score {last_score[query_id]}"
            )
        entries.append((doc_id, score))
        seen[query_id].add(doc_id)
        last_score[query_id] = score
    return RunFile(run_tag=run_tag, rankings={q: tuple(e) for q, e in rankings.items()})


def write_run(run: RunFile, stream: TextIO, header_lines: Sequence[str] = ()) -> None:
    """Write a run in TREC format with byte-stable output.

    Scores use fixed 6-decimal formatting and queries appear in stored
    order. header_lines are emitted first as '#' comments (parse_run skips
    them), so outputs can carry their configuration.
    """
    for line in header_lines:
        stream.write(f"# {line}\n")
    for query_id in run.query_ids():
        for position, (doc_id, score) in enumerate(run.ranking(query_id), start=1):
            stream.write(f"{query_id} Q0 {doc_id} {position} {score:.6f} {run.run_tag}\n")


def run_to_ranked_lists(run: RunFile) -> dict[str, RankedCandidateList]:
    """View a parsed run as per-query ranked candidate lists."""
    return {
        query_id: RankedCandidateList(
            query_id,
            tuple(RankedEntry(doc_id, score) for doc_id, score in run.ranking(query_id)),
        )
        for query_id in run.query_ids()
    }
