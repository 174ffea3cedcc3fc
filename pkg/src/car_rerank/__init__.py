"""Confidence-aware reranking: a training-free post-processor that reorders
retrieval candidates by how each document changes a generator's
answer-consistency, plus an NDCG/F1 evaluation harness."""

from .backends import (
    BackendDescriptor,
    BackendKind,
    CountingBackend,
    EntailmentVerdict,
    GeneratorBackend,
    GeneratorInput,
    HttpBackend,
    InputKind,
    ScriptedBackend,
    make_scripted_backend,
    scripted_backend_from_json,
)
from .cache import CachingBackend, ResponseCache
from .clustering import (
    cluster_greedy,
    cluster_pairwise,
    confidence_from_clusters,
    semantically_equivalent,
)
from .engine import (
    assign_bin,
    correct_ranking,
    estimate_confidence,
    is_gated,
    rerank_corpus,
    rerank_query,
    stable_bin_sort,
)
from .evaluation import (
    MetricReport,
    QrelsTable,
    RunFile,
    dcg_at_k,
    ndcg_at_k,
    parse_qrels,
    parse_run,
    relative_improvement,
    run_to_ranked_lists,
    token_f1,
    write_run,
)
from .prompts import PromptTemplates
from .sweep import SweepGrid, SweepResult, run_sweep
from .types import (
    AnswerNormalization,
    AnswerSample,
    BinLabel,
    CarConfig,
    ClusterAssignment,
    ClusteringMode,
    ConfidenceReport,
    DecodingParams,
    DocConfidence,
    DocumentRecord,
    QueryRecord,
    RankedCandidateList,
    RankedEntry,
    concat_lists,
    truncate_scope,
    validate_ranked_list,
)

__version__ = "0.1.0"

__all__ = [
    "AnswerNormalization",
    "AnswerSample",
    "BackendDescriptor",
    "BackendKind",
    "BinLabel",
    "CachingBackend",
    "CarConfig",
    "ClusterAssignment",
    "ClusteringMode",
    "ConfidenceReport",
    "CountingBackend",
    "DecodingParams",
    "DocConfidence",
    "DocumentRecord",
    "EntailmentVerdict",
    "GeneratorBackend",
    "GeneratorInput",
    "HttpBackend",
    "InputKind",
    "MetricReport",
    "PromptTemplates",
    "QrelsTable",
    "QueryRecord",
    "RankedCandidateList",
    "RankedEntry",
    "ResponseCache",
    "RunFile",
    "ScriptedBackend",
    "SweepGrid",
    "SweepResult",
    "assign_bin",
    "cluster_greedy",
    "cluster_pairwise",
    "concat_lists",
    "confidence_from_clusters",
    "correct_ranking",
    "dcg_at_k",
    "estimate_confidence",
    "is_gated",
    "make_scripted_backend",
    "ndcg_at_k",
    "parse_qrels",
    "parse_run",
    "relative_improvement",
    "rerank_corpus",
    "rerank_query",
    "run_sweep",
    "run_to_ranked_lists",
    "scripted_backend_from_json",
    "semantically_equivalent",
    "stable_bin_sort",
    "token_f1",
    "truncate_scope",
    "validate_ranked_list",
    "write_run",
]
