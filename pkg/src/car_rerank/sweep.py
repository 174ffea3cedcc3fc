"""Grid search over the query threshold and confidence margin.

Confidences do not depend on the grid cell: sampling and clustering happen
once per distinct input, and every cell merely replays gating, binning, and
the stable sort on the stored values. A whole sweep therefore costs no more
generator calls than a single reranking pass.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .backends import CountingBackend, GeneratorBackend, GeneratorInput
from .engine import correct_ranking, estimate_confidence, is_gated
from .errors import BackendError, MissingDocumentError
from .evaluation import QrelsTable, RunFile, ndcg_at_k
from .types import (
    CarConfig,
    Confidence,
    DocumentRecord,
    QueryRecord,
    RankedCandidateList,
    truncate_scope,
    validate_ranked_list,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID = tuple(round(i / 10, 1) for i in range(11))

EVAL_K = 5


@dataclass(frozen=True)
class SweepGrid:
    """The threshold/margin value lattice to search."""

    t_q_values: tuple[float, ...] = DEFAULT_GRID
    m_values: tuple[float, ...] = DEFAULT_GRID

    def __post_init__(self) -> None:
        if not self.t_q_values or not self.m_values:
            raise ValueError("sweep grid axes must be non-empty")


@dataclass(frozen=True)
class QuerySnapshot:
    """Everything cell evaluation needs for one query: its confidence, the
    per-document confidences of its rerank scope, and any failure."""

    query_id: str
    c_q: Confidence | None
    doc_confidences: Mapping[str, Confidence]
    failure: str | None = None


@dataclass(frozen=True)
class SweepCell:
    t_q: float
    m: float
    ndcg: float


@dataclass(frozen=True)
class SweepResult:
    cells: tuple[SweepCell, ...]
    best: SweepCell
    sample_calls: int
    judge_calls: int


def collect_confidences(
    queries: Sequence[QueryRecord],
    lists: Mapping[str, RankedCandidateList],
    documents: Mapping[str, DocumentRecord],
    backend: GeneratorBackend,
    config: CarConfig,
    grid: SweepGrid,
) -> tuple[dict[str, QuerySnapshot], int, int]:
    """Sample every confidence any grid cell can need, exactly once.

    Document-conditioned confidences are skipped for queries whose own
    confidence gates them in every cell of the grid.
    """
    counter = CountingBackend(backend)
    max_t_q = max(grid.t_q_values)
    snapshots: dict[str, QuerySnapshot] = {}
    for query in queries:
        ranked = lists[query.query_id]
        validate_ranked_list(ranked)
        try:
            c_q, _ = estimate_confidence(GeneratorInput.query_only(query), counter, config)
        except BackendError as err:
            logger.warning("sweep: query %s failed open: %s", query.query_id, err)
            snapshots[query.query_id] = QuerySnapshot(query.query_id, None, {}, str(err))
            continue
        needs_docs = config.disable_qt or c_q < max_t_q
        doc_confidences: dict[str, Confidence] = {}
        failure: str | None = None
        if needs_docs:
            head, _ = truncate_scope(ranked, config.top_n)
            for entry in head.entries:
                if entry.doc_id not in documents:
                    raise MissingDocumentError(entry.doc_id)
            try:
                for entry in head.entries:
                    gen_input = GeneratorInput.with_document(query, documents[entry.doc_id])
                    c_qd, _ = estimate_confidence(gen_input, counter, config)
                    doc_confidences[entry.doc_id] = c_qd
            except BackendError as err:
                logger.warning("sweep: query %s failed open: %s", query.query_id, err)
                doc_confidences = {}
                failure = str(err)
        snapshots[query.query_id] = QuerySnapshot(
            query.query_id, c_q, doc_confidences, failure
        )
    return snapshots, counter.sample_calls, counter.judge_calls


def rerank_cell(
    snapshot: QuerySnapshot,
    ranked: RankedCandidateList,
    config: CarConfig,
) -> RankedCandidateList:
    """Gate, bin, and sort one query from its snapshot under one cell's config."""
    if snapshot.failure is not None or snapshot.c_q is None:
        return ranked
    if is_gated(snapshot.c_q, config):
        return ranked
    new_ranked, _ = correct_ranking(ranked, snapshot.c_q, snapshot.doc_confidences, config)
    return new_ranked


def run_sweep(
    queries: Sequence[QueryRecord],
    lists: Mapping[str, RankedCandidateList],
    documents: Mapping[str, DocumentRecord],
    qrels: QrelsTable,
    backend: GeneratorBackend,
    config: CarConfig,
    grid: SweepGrid | None = None,
) -> SweepResult:
    """Evaluate NDCG@5 for every (threshold, margin) cell.

    The best cell is the first one reaching the maximum NDCG, scanning
    thresholds in grid order with margins nested inside.
    """
    grid = grid or SweepGrid()
    snapshots, sample_calls, judge_calls = collect_confidences(
        queries, lists, documents, backend, config, grid
    )
    cells: list[SweepCell] = []
    best: SweepCell | None = None
    for t_q in grid.t_q_values:
        for m in grid.m_values:
            cell_config = dataclasses.replace(
                config, query_threshold=t_q, confidence_margin=m
            )
            rankings: dict[str, tuple[tuple[str, float], ...]] = {}
            for query in queries:
                new_ranked = rerank_cell(
                    snapshots[query.query_id], lists[query.query_id], cell_config
                )
                n = len(new_ranked.entries)
                rankings[query.query_id] = tuple(
                    (entry.doc_id, float(n - position))
                    for position, entry in enumerate(new_ranked.entries)
                )
            run = RunFile(run_tag="sweep", rankings=rankings)
            score = ndcg_at_k(run, qrels, EVAL_K).macro_avg
            cell = SweepCell(t_q=t_q, m=m, ndcg=score)
            cells.append(cell)
            if best is None or cell.ndcg > best.ndcg:
                best = cell
    assert best is not None
    return SweepResult(
        cells=tuple(cells), best=best, sample_calls=sample_calls, judge_calls=judge_calls
    )
