import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracecore.errors import DistributionUnavailable, EmptySupport
from tracecore.oracle import LookupOracle, OracleResponse
from tracecore.sufficiency import (
    HarmScore,
    SufficiencyCriterion,
    harm,
    is_sufficient,
    kl_divergence,
)
from tracecore.synth import PlantedRuleOracle
from tracecore.trace import Subset, Trace


class TestKLDivergence:
    def test_identical_distributions(self):
        p = (("a", 0.3), ("b", 0.7))
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)

    def test_point_mass_versus_uniform(self):
        got = kl_divergence((("a", 1.0), ("b", 0.0)), (("a", 0.5), ("b", 0.5)))
        assert got == pytest.approx(math.log(2), abs=1e-9)

    def test_uniform_versus_point_mass_uses_floor(self):
        got = kl_divergence((("a", 0.5), ("b", 0.5)), (("a", 1.0), ("b", 0.0)))
        expected = 0.5 * math.log(0.5 / 1.0) + 0.5 * math.log(0.5 / 1e-12)
        assert got == pytest.approx(expected, abs=1e-6)

    def test_union_alignment_of_disjoint_supports(self):
        got = kl_divergence((("a", 1.0),), (("b", 1.0),))
        assert got > 20.0

    def test_candidates_canonicalized_before_alignment(self):
        got = kl_divergence((("58.0", 1.0),), (("58", 1.0),))
        assert got == pytest.approx(0.0, abs=1e-9)

    def test_empty_support(self):
        with pytest.raises(EmptySupport):
            kl_divergence((), ())

    @given(st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6),
           st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6))
    @settings(max_examples=200)
    def test_non_negative_and_self_zero(self, p_raw, q_raw):
        n = min(len(p_raw), len(q_raw))
        candidates = [f"c{i}" for i in range(n)]
        p = tuple(zip(candidates, [v / sum(p_raw[:n]) for v in p_raw[:n]]))
        q = tuple(zip(candidates, [v / sum(q_raw[:n]) for v in q_raw[:n]]))
        assert kl_divergence(p, q) >= -1e-9
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-9)

    @given(st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=2, max_size=6),
           st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=2, max_size=6))
    @settings(max_examples=100, deadline=None)
    def test_matches_scipy_on_shared_supports(self, p_raw, q_raw):
        from scipy.stats import entropy
        n = min(len(p_raw), len(q_raw))
        candidates = [f"c{i}" for i in range(n)]
        p_vals = [v / sum(p_raw[:n]) for v in p_raw[:n]]
        q_vals = [v / sum(q_raw[:n]) for v in q_raw[:n]]
        got = kl_divergence(tuple(zip(candidates, p_vals)),
                            tuple(zip(candidates, q_vals)))
        assert got == pytest.approx(float(entropy(p_vals, q_vals)), abs=1e-9)


def planted(rule="all_of_keys_required", T=4, keys=(0, 2), **kwargs):
    values = tuple(i + 2 for i in range(len(keys)))
    oracle = PlantedRuleOracle("s", rule, T, values, **kwargs)
    texts = []
    value_iter = iter(values)
    for t in range(T):
        if t in keys:
            texts.append(f"needed fact key:{next(value_iter)} in the chain.")
        else:
            texts.append("redundant elaboration that can be dropped.")
    full = oracle.evaluate("q", tuple(texts))
    trace = Trace.from_texts("s", "q", texts, full.answer)
    return trace, oracle


class TestAnswerSufficiency:
    def test_full_subset_always_sufficient(self):
        trace, oracle = planted()
        criterion = SufficiencyCriterion("answer")
        assert is_sufficient(criterion, oracle, trace, Subset.full(len(trace)))

    def test_core_only_subset_sufficient(self):
        trace, oracle = planted()
        criterion = SufficiencyCriterion("answer")
        assert is_sufficient(criterion, oracle, trace, Subset((0, 2), 4))

    def test_filler_only_subset_insufficient(self):
        trace, oracle = planted()
        criterion = SufficiencyCriterion("answer")
        assert not is_sufficient(criterion, oracle, trace, Subset((1, 3), 4))


class TestDistributionSufficiency:
    def test_identical_distribution_at_zero_epsilon(self):
        trace, oracle = planted()
        criterion = SufficiencyCriterion("distribution", epsilon=0.0)
        assert is_sufficient(criterion, oracle, trace, Subset.full(4))

    def test_broken_subset_rejected(self):
        trace, oracle = planted()
        criterion = SufficiencyCriterion("distribution", epsilon=0.5)
        assert not is_sufficient(criterion, oracle, trace, Subset((1, 3), 4))

    def test_infinite_epsilon_accepts_everything(self):
        trace, oracle = planted()
        criterion = SufficiencyCriterion("distribution", epsilon=math.inf)
        assert is_sufficient(criterion, oracle, trace, Subset((), 4))

    def test_missing_distribution_raises(self):
        trace, oracle = planted(provide_distribution=False)
        criterion = SufficiencyCriterion("distribution", epsilon=0.1)
        with pytest.raises(DistributionUnavailable):
            is_sufficient(criterion, oracle, trace, Subset((0, 2), 4))

    def test_monotone_in_epsilon(self):
        # Context-sensitive oracle: removing fillers drifts the distribution.
        trace, oracle = planted(context_sensitivity=0.3)
        subsets = [Subset.full(4), Subset((0, 1, 2), 4), Subset((0, 2), 4)]
        epsilons = [0.0, 1e-4, 1e-2, 1.0, math.inf]
        for subset in subsets:
            verdicts = [
                is_sufficient(SufficiencyCriterion("distribution", eps), oracle, trace, subset)
                for eps in epsilons
            ]
            # once sufficient at some epsilon, sufficient at every larger one
            assert verdicts == sorted(verdicts)


def lossy_lookup(loss_full, loss_deleted, harm_signal=None):
    full_texts = ("alpha step text", "beta step text")
    deleted_texts = ("alpha step text",)
    return LookupOracle({
        full_texts: OracleResponse("a", answer_loss=loss_full),
        deleted_texts: OracleResponse(
            "a", answer_loss=loss_deleted, harm_signal=harm_signal),
    })


def two_step_trace():
    return Trace.from_texts("h", "q", ["alpha step text", "beta step text"], "a")


class TestHarm:
    def test_loss_increase(self):
        oracle = lossy_lookup(2.0, 2.5)
        got = harm(oracle, two_step_trace(), Subset.full(2), 1)
        assert got == HarmScore(value=0.5, source="loss_increase")

    def test_equal_losses_give_zero(self):
        oracle = lossy_lookup(2.0, 2.0)
        got = harm(oracle, two_step_trace(), Subset.full(2), 1)
        assert got.value == 0.0
        assert got.source == "loss_increase"

    def test_harm_signal_fallback(self):
        oracle = lossy_lookup(None, None, harm_signal=0.3)
        got = harm(oracle, two_step_trace(), Subset.full(2), 1)
        assert got == HarmScore(value=0.3, source="harm_signal")

    def test_zero_fallback(self):
        oracle = lossy_lookup(None, None)
        got = harm(oracle, two_step_trace(), Subset.full(2), 1)
        assert got == HarmScore(value=0.0, source="zero_fallback")

    def test_candidate_must_be_in_subset(self):
        oracle = lossy_lookup(1.0, 1.0)
        with pytest.raises(ValueError):
            harm(oracle, two_step_trace(), Subset((0,), 2), 1)


def test_criterion_validation():
    with pytest.raises(ValueError):
        SufficiencyCriterion("nope")
    with pytest.raises(ValueError):
        SufficiencyCriterion("distribution", epsilon=-1.0)
