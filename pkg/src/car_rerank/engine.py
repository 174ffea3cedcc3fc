"""The confidence-aware reranking pass.

Per query: estimate answer-consistency confidence from the query alone; if
it clears the query threshold, trust the baseline ranking untouched.
Otherwise estimate document-conditioned confidence for each candidate in the
rerank scope, label each document promote / preserve / demote depending on
whether its confidence clears a margin band around the query confidence, and
stable-sort by label so baseline order survives within every band. Backend
failures never degrade a ranking: the query fails open to its baseline.
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

from .backends import CountingBackend, GeneratorBackend, GeneratorInput
from .clustering import cluster_greedy, cluster_pairwise, confidence_from_clusters
from .errors import BackendError, MissingDocumentError, MissingLabelError
from .evaluation import RunFile
from .types import (
    BinLabel,
    CarConfig,
    ClusterAssignment,
    ClusteringMode,
    concat_lists,
    Confidence,
    ConfidenceReport,
    DocConfidence,
    DocumentRecord,
    QueryRecord,
    RankedCandidateList,
    truncate_scope,
    validate_ranked_list,
)

logger = logging.getLogger(__name__)

# Margin comparisons are evaluated at 9-decimal resolution. Confidences are
# exact multiples of 1/k and thresholds of 0.1, but the sums c_q + m and
# c_q - m pick up binary-float noise (0.4 + 0.2 > 0.6), so raw comparisons
# would miss boundaries the arithmetic intends to hit exactly. Snapping both
# sides restores grid-exact boundary semantics; genuine gaps between legal
# values are many orders of magnitude wider than 1e-9.
_BOUNDARY_DECIMALS = 9


def _snap(value: float) -> float:
    return round(value, _BOUNDARY_DECIMALS)


def estimate_confidence(
    gen_input: GeneratorInput, backend: GeneratorBackend, config: CarConfig
) -> tuple[Confidence, ClusterAssignment]:
    """Sample k answers for the input, cluster them, and return the
    largest-cluster proportion together with the assignment."""
    samples = backend.sample_answers(gen_input, config.k, config.decoding)
    if config.clustering_mode is ClusteringMode.GREEDY:
        assignment = cluster_greedy(
            samples, backend.judge_entailment, normalization=config.answer_normalization
        )
    else:
        assignment = cluster_pairwise(
            samples, backend.judge_entailment, normalization=config.answer_normalization
        )
    return confidence_from_clusters(assignment), assignment


def assign_bin(c_qd: Confidence, c_q: Confidence, margin: float) -> BinLabel:
    """Label one document from its conditioned confidence.

    Promote when c_qd >= c_q + margin, else demote when c_qd <= c_q - margin,
    else preserve. The promote branch is checked first, so with margin 0 an
    exactly unchanged confidence promotes.
    """
    value = _snap(c_qd)
    if value >= _snap(c_q + margin):
        return BinLabel.PROMOTE
    if value <= _snap(c_q - margin):
        return BinLabel.DEMOTE
    return BinLabel.PRESERVE


def stable_bin_sort(
    ranked: RankedCandidateList, labels: Mapping[str, BinLabel]
) -> RankedCandidateList:
    """Reorder a list by bin (promote before preserve before demote) while
    keeping the incoming relative order inside each bin."""
    for entry in ranked.entries:
        if entry.doc_id not in labels:
            raise MissingLabelError(entry.doc_id)
    reordered = sorted(ranked.entries, key=lambda entry: -labels[entry.doc_id])
    return RankedCandidateList(ranked.query_id, tuple(reordered))


def is_gated(c_q: Confidence, config: CarConfig) -> bool:
    """True when the query is confident enough to keep its baseline ranking."""
    return not config.disable_qt and c_q >= config.query_threshold


def correct_ranking(
    ranked: RankedCandidateList,
    c_q: Confidence,
    doc_confidences: Mapping[str, Confidence],
    config: CarConfig,
) -> tuple[RankedCandidateList, tuple[DocConfidence, ...]]:
    """Apply binning and the stable sort to the top_n head of a ranked list.

    doc_confidences must cover every head document. Entries beyond top_n are
    appended after the reordered head, untouched.
    """
    head, tail = truncate_scope(ranked, config.top_n)
    margin = config.effective_margin
    labels: dict[str, BinLabel] = {}
    per_doc: list[DocConfidence] = []
    for entry in head.entries:
        if entry.doc_id not in doc_confidences:
            raise MissingLabelError(entry.doc_id)
        c_qd = doc_confidences[entry.doc_id]
        label = assign_bin(c_qd, c_q, margin)
        labels[entry.doc_id] = label
        per_doc.append(DocConfidence(entry.doc_id, c_qd, c_qd - c_q, label))
    new_head = stable_bin_sort(head, labels)
    return concat_lists(new_head, tail), tuple(per_doc)


def rerank_query(
    query: QueryRecord,
    ranked: RankedCandidateList,
    documents: Mapping[str, DocumentRecord],
    backend: GeneratorBackend,
    config: CarConfig,
) -> tuple[RankedCandidateList, ConfidenceReport]:
    """Run the full confidence-aware pass for one query.

    Returns the (possibly) reordered list and a report of every confidence
    observed. Backend failures fail open: the baseline order comes back
    unchanged with the failure recorded in the report. Documents outside the
    top_n scope are never sampled and need no corpus text.
    """
    validate_ranked_list(ranked)
    counter = CountingBackend(backend)
    try:
        c_q, _ = estimate_confidence(GeneratorInput.query_only(query), counter, config)
    except BackendError as err:
        logger.warning("query %s failed open at query sampling: %s", query.query_id, err)
        return ranked, ConfidenceReport(
            query_id=query.query_id,
            query_confidence=None,
            gated=False,
            per_doc=(),
            judge_call_count=counter.judge_calls,
            sample_call_count=counter.sample_calls,
            failure=str(err),
        )

    if is_gated(c_q, config):
        return ranked, ConfidenceReport(
            query_id=query.query_id,
            query_confidence=c_q,
            gated=True,
            per_doc=(),
            judge_call_count=counter.judge_calls,
            sample_call_count=counter.sample_calls,
        )

    head, _ = truncate_scope(ranked, config.top_n)
    for entry in head.entries:
        if entry.doc_id not in documents:
            raise MissingDocumentError(entry.doc_id)

    doc_confidences: dict[str, Confidence] = {}
    try:
        for entry in head.entries:
            gen_input = GeneratorInput.with_document(query, documents[entry.doc_id])
            c_qd, _ = estimate_confidence(gen_input, counter, config)
            doc_confidences[entry.doc_id] = c_qd
    except BackendError as err:
        logger.warning("query %s failed open at document sampling: %s", query.query_id, err)
        return ranked, ConfidenceReport(
            query_id=query.query_id,
            query_confidence=c_q,
            gated=False,
            per_doc=(),
            judge_call_count=counter.judge_calls,
            sample_call_count=counter.sample_calls,
            failure=str(err),
        )

    new_ranked, per_doc = correct_ranking(ranked, c_q, doc_confidences, config)
    return new_ranked, ConfidenceReport(
        query_id=query.query_id,
        query_confidence=c_q,
        gated=False,
        per_doc=per_doc,
        judge_call_count=counter.judge_calls,
        sample_call_count=counter.sample_calls,
    )


def rerank_corpus(
    queries: Sequence[QueryRecord],
    lists: Mapping[str, RankedCandidateList],
    documents: Mapping[str, DocumentRecord],
    backend: GeneratorBackend,
    config: CarConfig,
    run_tag: str = "CAR",
) -> tuple[RunFile, list[ConfidenceReport]]:
    """Rerank every query independently and assemble a run file.

    Output scores are synthetic descending integers (n, n-1, ..., 1) so rank
    order is encoded in the scores. A backend failure on one query never
    aborts the batch; that query keeps its baseline order.
    """
    rankings: dict[str, tuple[tuple[str, float], ...]] = {}
    reports: list[ConfidenceReport] = []
    for query in queries:
        if query.query_id not in lists:
            raise ValueError(f"no ranked list supplied for query {query.query_id!r}")
        new_ranked, report = rerank_query(
            query, lists[query.query_id], documents, backend, config
        )
        n = len(new_ranked.entries)
        rankings[query.query_id] = tuple(
            (entry.doc_id, float(n - position))
            for position, entry in enumerate(new_ranked.entries)
        )
        reports.append(report)
    return RunFile(run_tag=run_tag, rankings=rankings), reports
