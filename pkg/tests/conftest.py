"""Shared builders for scripted reranking scenarios.

Confidence targets are expressed as cluster fractions: an answer list with
j copies of one majority token plus k-j pairwise-distinct fillers yields a
largest-cluster proportion of exactly j/k under the equality judge.
"""

from __future__ import annotations

import pytest

from car_rerank import (
    DocumentRecord,
    QueryRecord,
    RankedCandidateList,
)


def answers_with_confidence(numerator: int, k: int, salt: str = "") -> list[str]:
    """Build k answers whose largest equality cluster has `numerator` members."""
    if not 1 <= numerator <= k:
        raise ValueError("numerator must be in 1..k")
    majority = [f"major{salt}"] * numerator
    fillers = [f"filler{salt}_{i}" for i in range(k - numerator)]
    return majority + fillers


def make_query(query_id: str) -> QueryRecord:
    return QueryRecord(query_id, f"question text for {query_id}")


def make_documents(query_id: str, doc_ids: list[str]) -> dict[str, DocumentRecord]:
    return {d: DocumentRecord(d, f"body of {d} for {query_id}") for d in doc_ids}


def make_ranked(query_id: str, doc_ids: list[str]) -> RankedCandidateList:
    return RankedCandidateList.from_doc_ids(query_id, doc_ids)


@pytest.fixture
def simple_query() -> QueryRecord:
    return make_query("q1")
