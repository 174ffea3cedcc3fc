"""Clustering behavior: bidirectional equivalence, both modes, call budgets."""

import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from car_rerank import (
    AnswerSample,
    EntailmentVerdict,
    cluster_greedy,
    cluster_pairwise,
    confidence_from_clusters,
    make_scripted_backend,
    semantically_equivalent,
)
from car_rerank.types import ClusterAssignment

E = EntailmentVerdict.ENTAILS
N = EntailmentVerdict.NOT_ENTAILS


class CountingJudge:
    """Wraps a judge callable, tallying directed calls."""

    def __init__(self, judge):
        self.judge = judge
        self.calls = 0

    def __call__(self, premise, hypothesis):
        self.calls += 1
        return self.judge(premise, hypothesis)


def equality_judge():
    return CountingJudge(make_scripted_backend().judge_entailment)


def table_judge(table):
    return CountingJudge(lambda p, h: table[(p, h)])


def samples(texts):
    return [AnswerSample(text, i) for i, text in enumerate(texts)]


class TestSemanticallyEquivalent:
    def test_equal_strings_two_calls(self):
        judge = equality_judge()
        assert semantically_equivalent("X", "X", judge) is True
        assert judge.calls == 2

    def test_asymmetric_entailment_is_not_equivalence(self):
        judge = table_judge({("a", "b"): E, ("b", "a"): N})
        assert semantically_equivalent("a", "b", judge) is False
        assert judge.calls == 2

    def test_short_circuit_saves_second_call(self):
        judge = equality_judge()
        assert semantically_equivalent("X", "Y", judge) is False
        assert judge.calls == 1

    def test_no_short_circuit_issues_both(self):
        judge = equality_judge()
        assert semantically_equivalent("X", "Y", judge, short_circuit=False) is False
        assert judge.calls == 2

    def test_blank_pairs_need_no_judge(self):
        judge = equality_judge()
        assert semantically_equivalent("", "", judge) is True
        assert semantically_equivalent("", "x", judge) is False
        assert judge.calls == 0


class TestClusterGreedy:
    def test_equality_partition(self):
        judge = equality_judge()
        assignment = cluster_greedy(samples(["A", "B", "A"]), judge)
        assert assignment.labels == (0, 1, 0)
        assert assignment.cluster_count == 2
        assert assignment.cluster_sizes == (2, 1)

    def test_all_equal(self):
        assignment = cluster_greedy(samples(["A", "A", "A"]), equality_judge())
        assert assignment.labels == (0, 0, 0)
        assert assignment.cluster_count == 1

    def test_nontransitive_directed_judge_traces_by_representative(self):
        # Directed script: a->b holds but not b->a, b->c holds but not c->b,
        # and a,c are unrelated. Bidirectional equivalence therefore fails
        # for every pair, and each answer opens its own cluster: b is
        # compared only against representative a (reverse direction fails),
        # c against representatives a then b.
        table = {
            ("a", "b"): E, ("b", "a"): N,
            ("b", "c"): E, ("c", "b"): N,
            ("a", "c"): N, ("c", "a"): N,
        }
        judge = table_judge(table)
        assignment = cluster_greedy(samples(["a", "b", "c"]), judge)
        assert assignment.labels == (0, 1, 2)

    def test_duplicate_texts_skip_judge_calls(self):
        judge = equality_judge()
        assignment = cluster_greedy(samples(["A", "A", "A", "A"]), judge)
        assert assignment.labels == (0, 0, 0, 0)
        assert judge.calls == 0

    def test_empty_answers_rejected(self):
        with pytest.raises(ValueError):
            cluster_greedy([], equality_judge())


class TestClusterPairwise:
    def test_equality_partition_matches_greedy(self):
        assignment = cluster_pairwise(samples(["A", "B", "A"]), equality_judge())
        assert assignment.labels == (0, 1, 0)

    def test_nontransitive_equivalence_merges_via_components(self):
        # a~b and b~c hold bidirectionally, a~c does not: union-find over
        # edges {(0,1), (1,2)} leaves one component.
        table = {
            ("a", "b"): E, ("b", "a"): E,
            ("b", "c"): E, ("c", "b"): E,
            ("a", "c"): N, ("c", "a"): N,
        }
        assignment = cluster_pairwise(samples(["a", "b", "c"]), table_judge(table))
        assert assignment.labels == (0, 0, 0)
        assert assignment.cluster_count == 1

    def test_single_answer_zero_calls(self):
        judge = equality_judge()
        assignment = cluster_pairwise(samples(["only"]), judge)
        assert assignment.labels == (0,)
        assert judge.calls == 0

    def test_labels_numbered_by_smallest_member(self):
        assignment = cluster_pairwise(samples(["B", "A", "B", "A"]), equality_judge())
        assert assignment.labels == (0, 1, 0, 1)

    def test_partition_order_invariant(self):
        rng = random.Random(7)
        texts = ["w1", "w2", "w1", "w3", "w2", "w1"]
        base_sizes = sorted(cluster_pairwise(samples(texts), equality_judge()).cluster_sizes)
        for _ in range(20):
            shuffled = texts[:]
            rng.shuffle(shuffled)
            sizes = sorted(cluster_pairwise(samples(shuffled), equality_judge()).cluster_sizes)
            assert sizes == base_sizes


class TestConfidence:
    def test_direct_arithmetic(self):
        assignment = ClusterAssignment.from_labels([0] * 6 + [1] * 3 + [2])
        assert confidence_from_clusters(assignment) == 0.6

    def test_unanimous(self):
        assignment = ClusterAssignment.from_labels([0] * 10)
        assert confidence_from_clusters(assignment) == 1.0

    def test_fully_dispersed(self):
        assignment = ClusterAssignment.from_labels([0, 1, 2, 3])
        assert confidence_from_clusters(assignment) == 0.25

    @given(
        texts=st.lists(
            st.sampled_from(["u", "v", "w", "x", "y", "z"]), min_size=1, max_size=12
        )
    )
    @settings(max_examples=300)
    def test_confidence_lies_on_the_sample_grid(self, texts):
        k = len(texts)
        assignment = cluster_greedy(samples(texts), make_scripted_backend().judge_entailment)
        value = confidence_from_clusters(assignment)
        assert value in {j / k for j in range(1, k + 1)}


word_lists = st.lists(
    st.sampled_from(["red", "green", "blue", "cyan", "pink"]), min_size=1, max_size=10
)


class TestModeAgreement:
    @given(texts=word_lists)
    @settings(max_examples=200)
    def test_modes_agree_under_equality_judge(self, texts):
        answer_set = samples(texts)
        greedy = cluster_greedy(answer_set, make_scripted_backend().judge_entailment)
        pairwise = cluster_pairwise(answer_set, make_scripted_backend().judge_entailment)
        assert greedy == pairwise
        assert confidence_from_clusters(greedy) == confidence_from_clusters(pairwise)

    @given(texts=word_lists)
    @settings(max_examples=200)
    def test_partitions_are_valid_and_match_counter(self, texts):
        assignment = cluster_greedy(samples(texts), make_scripted_backend().judge_entailment)
        # Under the equality judge, cluster sizes must reproduce plain
        # string-count multiplicity.
        expected = sorted(Counter(texts).values(), reverse=True)
        assert sorted(assignment.cluster_sizes, reverse=True) == expected


def random_directed_table(texts, rng):
    """Arbitrary (possibly asymmetric, non-transitive) directed verdicts."""
    table = {}
    for a in set(texts):
        for b in set(texts):
            if a != b:
                table[(a, b)] = rng.choice([E, N])
    return table


class TestCallBudgets:
    def test_pairwise_at_most_k_times_k_minus_one(self):
        rng = random.Random(42)
        for _ in range(100):
            k = rng.randint(1, 10)
            texts = [f"t{rng.randint(0, 5)}" for _ in range(k)]
            judge = table_judge(random_directed_table(texts, rng))
            cluster_pairwise(samples(texts), judge)
            assert judge.calls <= k * (k - 1)

    def test_greedy_at_most_two_k_r(self):
        rng = random.Random(43)
        for _ in range(100):
            k = rng.randint(1, 10)
            texts = [f"t{rng.randint(0, 5)}" for _ in range(k)]
            judge = table_judge(random_directed_table(texts, rng))
            assignment = cluster_greedy(samples(texts), judge)
            assert judge.calls <= 2 * k * assignment.cluster_count

    def test_normalization_merge_avoids_judging(self):
        judge = equality_judge()
        cluster_pairwise(samples(["X", " x ", "X", "y"]), judge)
        # Only the unique normalized pair (x, y) is judged; one directed
        # call suffices in short-circuit mode, two without.
        assert judge.calls == 2
