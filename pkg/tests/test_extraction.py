import itertools
import random

import pytest

from tracecore.errors import FullTraceInsufficient, TraceTooLong
from tracecore.extraction import (
    budget_matched_subset,
    exhaustive_minimum,
    greedy_backward,
    necessity_guided,
    random_deletion,
)
from tracecore.metrics import necessity_profile
from tracecore.oracle import canonicalize_answer
from tracecore.sufficiency import SufficiencyCriterion, is_sufficient
from tracecore.synth import PlantedRuleOracle, PlantedSpec, generate
from tracecore.trace import Subset, Trace

ANSWER = SufficiencyCriterion("answer")


def brute_force_minimum(trace, oracle):
    """Independent ground truth: first sufficient subset by (size, lex)."""
    T = len(trace)
    full = canonicalize_answer(trace.full_answer)
    for size in range(T + 1):
        for combo in itertools.combinations(range(T), size):
            texts = tuple(trace.steps[i].text for i in combo)
            answer = oracle.evaluate(trace.input, texts).answer
            if canonicalize_answer(answer) == full:
                return set(combo)
    raise AssertionError("no sufficient subset exists")


def planted(rule, T, keys, threshold=0, seed=0):
    spec = PlantedSpec(T=T, key_indices=tuple(keys), rule=rule,
                       threshold=threshold, seed=seed)
    return generate(spec, trace_id=f"{rule}-{T}-{seed}")


class TestGreedy:
    def test_recovers_planted_core(self):
        trace, oracle = planted("sum_of_keys", 4, (0, 2))
        result = greedy_backward(trace, oracle, ANSWER)
        assert set(result.core.indices) == {0, 2}
        assert set(result.deleted_indices) == {1, 3}
        assert brute_force_minimum(trace, oracle) == {0, 2}

    def test_nothing_removable_when_every_step_needed(self):
        trace, oracle = planted("sum_of_keys", 4, (0, 1, 2, 3))
        result = greedy_backward(trace, oracle, ANSWER)
        assert result.core == Subset.full(4)
        assert result.path == ()

    def test_single_step_trace_with_needed_key(self):
        trace, oracle = planted("all_of_keys_required", 1, (0,))
        result = greedy_backward(trace, oracle, ANSWER)
        assert result.core.indices == (0,)

    def test_single_step_trace_with_empty_sufficient_context(self):
        trace, oracle = planted("all_of_keys_required", 1, ())
        result = greedy_backward(trace, oracle, ANSWER)
        assert result.core.indices == ()

    def test_full_trace_insufficient_raises(self):
        trace, oracle = planted("all_of_keys_required", 3, (0,))
        broken = Trace.from_texts(trace.id, trace.input, trace.step_texts, "999999")
        with pytest.raises(FullTraceInsufficient):
            greedy_backward(broken, oracle, ANSWER)

    def test_intermediate_subsets_all_sufficient(self):
        trace, oracle = planted("all_of_keys_required", 8, (1, 4), seed=3)
        result = greedy_backward(trace, oracle, ANSWER)
        subset = Subset.full(8)
        for deletions, (t, _) in enumerate(result.path, start=1):
            subset = subset.without(t)
            assert is_sufficient(ANSWER, oracle, trace, subset)
            assert len(subset) == 8 - deletions

    def test_core_is_irreducible(self):
        trace, oracle = planted("any_k_of_keys", 7, (0, 2, 4, 6), threshold=2, seed=5)
        result = greedy_backward(trace, oracle, ANSWER)
        assert result.irreducible
        for t in result.core.indices:
            assert not is_sufficient(ANSWER, oracle, trace, result.core.without(t))

    def test_check_budget(self):
        for seed in range(10):
            rng = random.Random(seed)
            T = rng.randint(1, 10)
            keys = tuple(sorted(rng.sample(range(T), rng.randint(0, T))))
            trace, oracle = planted("all_of_keys_required", T, keys, seed=seed)
            result = greedy_backward(trace, oracle, ANSWER)
            assert result.sufficiency_checks <= T * (T + 1) // 2 + T

    def test_deterministic(self):
        trace, oracle = planted("any_k_of_keys", 6, (1, 2, 5), threshold=1, seed=9)
        first = greedy_backward(trace, oracle, ANSWER)
        trace2, oracle2 = planted("any_k_of_keys", 6, (1, 2, 5), threshold=1, seed=9)
        second = greedy_backward(trace2, oracle2, ANSWER)
        assert first == second

    def test_never_smaller_than_exhaustive(self):
        for seed in range(15):
            rng = random.Random(1000 + seed)
            T = rng.randint(2, 8)
            rule = rng.choice(["sum_of_keys", "all_of_keys_required", "any_k_of_keys"])
            keys = tuple(sorted(rng.sample(range(T), rng.randint(0, T))))
            threshold = max(1, len(keys) // 2) if (rule == "any_k_of_keys" and keys) else 0
            trace, oracle = planted(rule, T, keys, threshold=threshold, seed=seed)
            greedy = greedy_backward(trace, oracle, ANSWER)
            truth = brute_force_minimum(trace, oracle)
            assert len(greedy.core) >= len(truth)
            assert is_sufficient(ANSWER, oracle, trace, greedy.core)


class TestNecessityGuided:
    def test_removes_fillers_keeps_keys(self):
        trace, oracle = planted("all_of_keys_required", 6, (0, 3), seed=2)
        profile = necessity_profile(trace, oracle)
        result = necessity_guided(trace, oracle, ANSWER, profile)
        assert set(result.core.indices) == {0, 3}
        assert result.variant == "checked"

    def test_keeps_everything_when_all_deltas_positive(self):
        trace, oracle = planted("sum_of_keys", 4, (0, 1, 2, 3))
        profile = necessity_profile(trace, oracle)
        assert all(d > 0 for d in profile.deltas)
        result = necessity_guided(trace, oracle, ANSWER, profile)
        assert result.core == Subset.full(4)

    def test_substitutable_pair_keeps_exactly_one(self):
        # Two interchangeable key steps: each alone suffices, both have
        # zero leave-one-out delta, so the walk removes the first and must
        # keep the second.
        trace, oracle = planted("any_k_of_keys", 2, (0, 1), threshold=1)
        profile = necessity_profile(trace, oracle)
        assert profile.deltas == (0.0, 0.0)
        result = necessity_guided(trace, oracle, ANSWER, profile)
        assert result.core.indices == (1,)

    def test_result_is_sufficient_but_not_marked_irreducible(self):
        trace, oracle = planted("any_k_of_keys", 6, (0, 1, 2), threshold=1, seed=4)
        profile = necessity_profile(trace, oracle)
        result = necessity_guided(trace, oracle, ANSWER, profile)
        assert is_sufficient(ANSWER, oracle, trace, result.core)
        assert not result.irreducible

    def test_blind_variant_deletes_unconditionally(self):
        trace, oracle = planted("any_k_of_keys", 4, (0, 1), threshold=1)
        profile = necessity_profile(trace, oracle)
        result = necessity_guided(trace, oracle, ANSWER, profile,
                                  blind=True, removal_rate=0.75)
        assert len(result.deleted_indices) == 3
        assert result.variant == "blind"
        # deleting the three lowest-delta steps removed both keys
        assert result.sufficient is False

    def test_ranking_without_profile_falls_back_to_harm(self):
        trace, oracle = planted("all_of_keys_required", 5, (2,), seed=7)
        result = necessity_guided(trace, oracle, ANSWER, profile=None)
        assert set(result.core.indices) == {2}


class TestRandomDeletion:
    def test_zero_rate_keeps_full_trace(self):
        trace, oracle = planted("all_of_keys_required", 6, (0, 3))
        result = random_deletion(trace, oracle, ANSWER, 0.0, seed=1)
        assert result.core == Subset.full(6)
        assert result.sufficient is True

    def test_full_rate_empties_trace(self):
        trace, oracle = planted("all_of_keys_required", 6, (0, 3))
        result = random_deletion(trace, oracle, ANSWER, 1.0, seed=1)
        assert result.core.indices == ()

    def test_deletion_count_is_the_exact_floor(self):
        from fractions import Fraction
        from tracecore.extraction import deletion_count
        for num in range(0, 101):
            for T in range(1, 60):
                expected = (Fraction(num, 100) * T).__floor__()
                assert deletion_count(num / 100, T) == expected, (num / 100, T)

    def test_seeded_determinism(self):
        trace, oracle = planted("all_of_keys_required", 8, (0, 3))
        first = random_deletion(trace, oracle, ANSWER, 0.5, seed=11)
        second = random_deletion(trace, oracle, ANSWER, 0.5, seed=11)
        assert first == second
        assert len(first.deleted_indices) == 4
        different = random_deletion(trace, oracle, ANSWER, 0.5, seed=12)
        assert first.seed != different.seed


class TestExhaustive:
    def test_matches_hand_enumeration(self):
        trace, oracle = planted("sum_of_keys", 4, (0, 2))
        result = exhaustive_minimum(trace, oracle, ANSWER)
        assert set(result.core.indices) == brute_force_minimum(trace, oracle) == {0, 2}
        assert result.irreducible

    def test_empty_subset_checked_first(self):
        trace, oracle = planted("all_of_keys_required", 3, ())
        result = exhaustive_minimum(trace, oracle, ANSWER)
        assert result.core.indices == ()
        assert result.sufficiency_checks == 1

    def test_all_steps_needed(self):
        trace, oracle = planted("sum_of_keys", 3, (0, 1, 2))
        result = exhaustive_minimum(trace, oracle, ANSWER)
        assert result.core == Subset.full(3)

    def test_lexicographic_preference_between_equal_minima(self):
        trace, oracle = planted("any_k_of_keys", 2, (0, 1), threshold=1)
        result = exhaustive_minimum(trace, oracle, ANSWER)
        assert result.core.indices == (0,)
        assert is_sufficient(ANSWER, oracle, trace, Subset((1,), 2))

    def test_trace_too_long(self):
        trace, oracle = planted("all_of_keys_required", 15, (0,))
        with pytest.raises(TraceTooLong):
            exhaustive_minimum(trace, oracle, ANSWER, max_T=14)

    def test_infinite_epsilon_deletes_everything(self):
        import math
        trace, oracle = planted("all_of_keys_required", 5, (0, 2))
        unconstrained = SufficiencyCriterion("distribution", epsilon=math.inf)
        assert exhaustive_minimum(trace, oracle, unconstrained).core.indices == ()
        assert greedy_backward(trace, oracle, unconstrained).core.indices == ()


class TestBudgetMatching:
    def greedy_on(self, T, keys, seed=0):
        trace, oracle = planted("all_of_keys_required", T, keys, seed=seed)
        return trace, oracle, greedy_backward(trace, oracle, ANSWER)

    def test_zero_budget_returns_full_set(self):
        trace, _, result = self.greedy_on(6, (0, 3))
        assert budget_matched_subset(result, trace, 0.0) == Subset.full(6)

    def test_exhausted_path_returns_terminal_subset(self):
        # 7 of 10 steps are keys: the greedy path stops after 3 deletions.
        trace, _, result = self.greedy_on(10, tuple(range(7)))
        assert len(result.path) == 3
        got = budget_matched_subset(result, trace, 0.5)
        assert got == result.core
        assert got.removal_fraction == pytest.approx(0.3)

    def test_intermediate_budget_picks_nearest_prefix(self):
        # 5 of 10 removable: path fractions are 0.0 .. 0.5 in 0.1 steps.
        trace, _, result = self.greedy_on(10, (0, 2, 4, 6, 8))
        assert len(result.path) == 5
        got = budget_matched_subset(result, trace, 0.4)
        assert got.removal_fraction == pytest.approx(0.4)
        expected_deleted = set(result.deleted_indices[:4])
        assert set(got.indices) == set(range(10)) - expected_deleted

    def test_equidistant_tie_prefers_smaller_removal(self):
        trace, _, result = self.greedy_on(10, (0, 2, 4, 6, 8))
        got = budget_matched_subset(result, trace, 0.25)
        assert got.removal_fraction == pytest.approx(0.2)

    def test_requires_greedy_result(self):
        trace, oracle = planted("all_of_keys_required", 4, (0,))
        result = random_deletion(trace, oracle, ANSWER, 0.5, seed=0)
        with pytest.raises(ValueError):
            budget_matched_subset(result, trace, 0.3)


class TestPathInvariants:
    def test_monotone_cardinality_along_path(self):
        trace, oracle = planted("all_of_keys_required", 9, (2, 5), seed=8)
        result = greedy_backward(trace, oracle, ANSWER)
        subset = Subset.full(9)
        sizes = [len(subset)]
        for t, _ in result.path:
            subset = subset.without(t)
            sizes.append(len(subset))
        assert sizes == list(range(9, 9 - len(result.path) - 1, -1))

    def test_core_and_path_partition_trace(self):
        trace, oracle = planted("any_k_of_keys", 8, (0, 1, 2, 3), threshold=2, seed=6)
        result = greedy_backward(trace, oracle, ANSWER)
        assert set(result.core.indices) | set(result.deleted_indices) == set(range(8))
        assert not set(result.core.indices) & set(result.deleted_indices)
