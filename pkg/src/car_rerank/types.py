"""Shared value types: queries, documents, ranked lists, cluster assignments,
confidence reports, and the engine configuration.

Everything here is an immutable value object with no IO and no generator
calls, safe to share between concurrent tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .errors import DuplicateDocIdError, EmptyQueryIdError

# Confidence values are plain floats in [0, 1]; when derived from k sampled
# answers they always lie on the grid {1/k, 2/k, ..., 1}.
Confidence = float


@dataclass(frozen=True, slots=True)
class QueryRecord:
    """A natural-language query with an opaque identifier."""

    query_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValueError("query_id must be non-empty")
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True, slots=True)
class DocumentRecord:
    """A candidate document body with an opaque identifier."""

    doc_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")


@dataclass(frozen=True, slots=True)
class RankedEntry:
    """One position of a ranked list: a doc_id plus the baseline's optional score.

    The score is carried through for provenance and run-file output only; the
    reranking engine consults position order, never score magnitudes.
    """

    doc_id: str
    score: float | None = None


@dataclass(frozen=True, slots=True)
class RankedCandidateList:
    """An ordered candidate-document permutation for one query.

    Ranks are 0-based internally; external TREC formats use 1-based ranks.
    """

    query_id: str
    entries: tuple[RankedEntry, ...]

    @classmethod
    def from_doc_ids(
        cls, query_id: str, doc_ids: list[str] | tuple[str, ...]
    ) -> "RankedCandidateList":
        return cls(query_id, tuple(RankedEntry(d) for d in doc_ids))

    def doc_ids(self) -> tuple[str, ...]:
        return tuple(e.doc_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def validate_ranked_list(ranked: RankedCandidateList) -> None:
    """Check ranked-list invariants; raises on the first violation.

    Raises:
        EmptyQueryIdError: the list has no query_id.
        DuplicateDocIdError: some doc_id occurs at two positions.
    """
    if not ranked.query_id:
        raise EmptyQueryIdError()
    seen: set[str] = set()
    for entry in ranked.entries:
        if entry.doc_id in seen:
            raise DuplicateDocIdError(entry.doc_id)
        seen.add(entry.doc_id)


def truncate_scope(
    ranked: RankedCandidateList, top_n: int
) -> tuple[RankedCandidateList, RankedCandidateList]:
    """Split a ranked list into its top_n head and the remaining tail.

    Concatenating head and tail entries reproduces the input exactly.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    head = RankedCandidateList(ranked.query_id, ranked.entries[:top_n])
    tail = RankedCandidateList(ranked.query_id, ranked.entries[top_n:])
    return head, tail


def concat_lists(
    head: RankedCandidateList, tail: RankedCandidateList
) -> RankedCandidateList:
    """Rejoin a head/tail split into a single ranked list."""
    if head.query_id != tail.query_id:
        raise ValueError("cannot concatenate lists from different queries")
    return RankedCandidateList(head.query_id, head.entries + tail.entries)


@dataclass(frozen=True, slots=True)
class AnswerSample:
    """One sampled generator answer, labeled with its 0-based sample index."""

    text: str
    sample_index: int


@dataclass(frozen=True, slots=True)
class ClusterAssignment:
    """Semantic-cluster labels for one input's k sampled answers.

    labels[i] is the cluster id of sample i; ids are contiguous 0..r-1 with
    cluster_sizes summing to k.
    """

    labels: tuple[int, ...]
    cluster_count: int
    cluster_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("cluster assignment needs at least one label")
        if sorted(set(self.labels)) != list(range(self.cluster_count)):
            raise ValueError("cluster ids must be contiguous 0..r-1")
        if len(self.cluster_sizes) != self.cluster_count:
            raise ValueError("cluster_sizes length must equal cluster_count")
        if sum(self.cluster_sizes) != len(self.labels):
            raise ValueError("cluster sizes must sum to the sample count")
        if any(size < 1 for size in self.cluster_sizes):
            raise ValueError("every cluster must have at least one member")

    @classmethod
    def from_labels(cls, labels: list[int] | tuple[int, ...]) -> "ClusterAssignment":
        labels = tuple(labels)
        count = max(labels) + 1 if labels else 0
        sizes = [0] * count
        for lab in labels:
            sizes[lab] += 1
        return cls(labels, count, tuple(sizes))


class BinLabel(IntEnum):
    """Discrete correction label: promote above, demote below, or keep in place."""

    PROMOTE = 1
    PRESERVE = 0
    DEMOTE = -1


@dataclass(frozen=True, slots=True)
class DocConfidence:
    """Per-document confidence outcome within one query's rerank pass."""

    doc_id: str
    confidence: Confidence
    delta: float
    label: BinLabel


@dataclass(frozen=True, slots=True)
class ConfidenceReport:
    """Everything observed while reranking one query.

    query_confidence is None only when query-level sampling itself failed.
    delta values are raw float differences (confidence - query_confidence),
    never re-rounded. Call counts tally logical generator usage: each
    sampling request contributes k, each directed entailment judgment 1.
    """

    query_id: str
    query_confidence: Confidence | None
    gated: bool
    per_doc: tuple[DocConfidence, ...]
    judge_call_count: int
    sample_call_count: int
    failure: str | None = None

    def __post_init__(self) -> None:
        if self.gated and self.per_doc:
            raise ValueError("a gated report must have no per-document entries")


class ClusteringMode(Enum):
    """Answer-clustering strategy: greedy saves judge calls, pairwise is
    fully parallelizable."""

    GREEDY = "greedy"
    PAIRWISE = "pairwise"


class AnswerNormalization(Enum):
    """How raw answer text is canonicalized before comparison."""

    NONE = "none"
    TRIM_LOWER = "trim_lower"


def normalize_answer(text: str, mode: AnswerNormalization) -> str:
    """Apply the configured canonicalization to an answer string."""
    if mode is AnswerNormalization.TRIM_LOWER:
        return text.strip().lower()
    return text


@dataclass(frozen=True, slots=True)
class DecodingParams:
    """Generator decoding settings: diverse sampling for answers, greedy for
    entailment judging."""

    temperature: float = 1.0
    judge_temperature: float = 0.0
    max_tokens: int = 64

    def __post_init__(self) -> None:
        if self.temperature < 0 or self.judge_temperature < 0:
            raise ValueError("temperatures must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True, slots=True)
class CarConfig:
    """Tunable knobs of the confidence-aware reranking pass.

    query_threshold and confidence_margin have no principled defaults; the
    shipped values are starting points meant to be replaced by a sweep.
    disable_qt forces correction of every query; disable_cm treats the
    margin as 0.
    """

    k: int = 10
    query_threshold: float = 0.5
    confidence_margin: float = 0.1
    top_n: int = 10
    clustering_mode: ClusteringMode = ClusteringMode.GREEDY
    disable_qt: bool = False
    disable_cm: bool = False
    decoding: DecodingParams = field(default_factory=DecodingParams)
    answer_normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0.0 <= self.query_threshold <= 1.0:
            raise ValueError("query_threshold must be in [0, 1]")
        if not 0.0 <= self.confidence_margin <= 1.0:
            raise ValueError("confidence_margin must be in [0, 1]")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")

    @property
    def effective_margin(self) -> float:
        return 0.0 if self.disable_cm else self.confidence_margin
