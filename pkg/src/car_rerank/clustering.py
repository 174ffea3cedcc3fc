"""Semantic clustering of sampled answers via bidirectional entailment.

Two answers belong to the same cluster only when each entails the other.
Greedy mode compares every answer against one representative per existing
cluster (cheap on judge calls, at most O(k*r) equivalence checks); pairwise
mode judges every unordered pair and takes connected components, which makes
the partition independent of answer order even for imperfect judges.

Identical normalized strings are merged without consulting the judge at all:
string equality trivially implies bidirectional entailment, and skipping the
calls keeps the judge budget tight.
"""

from __future__ import annotations

from typing import Callable, Sequence

from .backends import EntailmentVerdict, empty_answer_verdict
from .types import (
    AnswerNormalization,
    AnswerSample,
    ClusterAssignment,
    Confidence,
    normalize_answer,
)

EntailmentJudge = Callable[[str, str], EntailmentVerdict]


def semantically_equivalent(
    a: str,
    b: str,
    judge: EntailmentJudge,
    *,
    short_circuit: bool = True,
) -> bool:
    """True iff a entails b and b entails a.

    Blank-vs-blank pairs are equivalent and blank-vs-text pairs are not,
    decided here without judge calls. With short_circuit (the default) the
    reverse direction is skipped when the forward one already failed; turn
    it off to issue both directed judgments unconditionally, e.g. when they
    are dispatched concurrently.
    """
    degenerate = empty_answer_verdict(a, b, AnswerNormalization.NONE)
    if degenerate is not None:
        return degenerate is EntailmentVerdict.ENTAILS
    forward = judge(a, b)
    if short_circuit and forward is EntailmentVerdict.NOT_ENTAILS:
        return False
    backward = judge(b, a)
    return forward is EntailmentVerdict.ENTAILS and backward is EntailmentVerdict.ENTAILS


def _unique_texts(
    answers: Sequence[AnswerSample], normalization: AnswerNormalization
) -> tuple[list[str], list[int]]:
    """Deduplicate normalized answer texts, keeping first-occurrence order.

    Returns the unique texts and, per answer, the index of its unique text.
    """
    order: dict[str, int] = {}
    membership: list[int] = []
    for sample in answers:
        text = normalize_answer(sample.text, normalization)
        if text not in order:
            order[text] = len(order)
        membership.append(order[text])
    return list(order), membership


def cluster_greedy(
    answers: Sequence[AnswerSample],
    judge: EntailmentJudge,
    *,
    normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER,
) -> ClusterAssignment:
    """Assign answers to clusters by scanning them in sample order.

    Each answer is compared, in cluster-creation order, against the
    representative (first member) of every existing cluster and joins the
    first equivalent one; otherwise it opens a new cluster. Equivalence
    checks run as equivalent(answer, representative) with short-circuiting,
    so at most 2*k*r directed judgments are issued.
    """
    if not answers:
        raise ValueError("cannot cluster an empty answer set")
    texts, membership = _unique_texts(answers, normalization)
    representatives: list[str] = []
    text_label: list[int] = []
    for text in texts:
        assigned = None
        for cluster_id, representative in enumerate(representatives):
            if semantically_equivalent(text, representative, judge):
                assigned = cluster_id
                break
        if assigned is None:
            assigned = len(representatives)
            representatives.append(text)
        text_label.append(assigned)
    return ClusterAssignment.from_labels([text_label[m] for m in membership])


class _UnionFind:
    """Disjoint sets over 0..n-1 with path compression and union by size."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def cluster_pairwise(
    answers: Sequence[AnswerSample],
    judge: EntailmentJudge,
    *,
    normalization: AnswerNormalization = AnswerNormalization.TRIM_LOWER,
    short_circuit: bool = False,
) -> ClusterAssignment:
    """Cluster answers as connected components of the pairwise-equivalence graph.

    Every unordered pair of distinct normalized texts is checked, issuing up
    to k*(k-1) directed judgments (fewer when short_circuit is on; it is off
    by default because independent directed judgments can run concurrently).
    Components, rather than cliques, absorb non-transitive judges while
    keeping the result order-independent. Cluster ids are numbered by each
    component's smallest sample index.
    """
    if not answers:
        raise ValueError("cannot cluster an empty answer set")
    texts, membership = _unique_texts(answers, normalization)
    uf = _UnionFind(len(texts))
    for i in range(len(texts)):
        for j in range(i + 1, len(texts)):
            if semantically_equivalent(texts[i], texts[j], judge, short_circuit=short_circuit):
                uf.union(i, j)
    # Number components by the smallest sample index they contain.
    root_first_sample: dict[int, int] = {}
    for sample_index, text_index in enumerate(membership):
        root = uf.find(text_index)
        root_first_sample.setdefault(root, sample_index)
    ordered_roots = sorted(root_first_sample, key=lambda r: root_first_sample[r])
    root_label = {root: label for label, root in enumerate(ordered_roots)}
    return ClusterAssignment.from_labels(
        [root_label[uf.find(text_index)] for text_index in membership]
    )


def confidence_from_clusters(assignment: ClusterAssignment) -> Confidence:
    """Confidence of one input: the proportion of the largest semantic cluster."""
    return max(assignment.cluster_sizes) / len(assignment.labels)
