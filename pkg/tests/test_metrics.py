import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracecore.errors import DegenerateProfile, EmptyInput, LossUnavailable
from tracecore.extraction import exhaustive_minimum, greedy_backward
from tracecore.metrics import (
    NecessityProfile,
    compression,
    gini,
    necessity_profile,
    nmass_k,
    overcompleteness_certificate,
    retention,
    sparse_necessity_certificate,
    topk_indices,
)
from tracecore.oracle import LookupOracle, OracleResponse
from tracecore.sufficiency import SufficiencyCriterion, is_sufficient
from tracecore.synth import PlantedSpec, generate
from tracecore.trace import Subset, Trace

ANSWER = SufficiencyCriterion("answer")
ETA = 1e-8


def loss_table_oracle(losses_by_texts):
    table = {texts: OracleResponse("a", answer_loss=loss)
             for texts, loss in losses_by_texts.items()}
    return LookupOracle(table)


def four_step_trace():
    texts = [f"reasoning unit number {i} with padding" for i in range(4)]
    return Trace.from_texts("m", "q", texts, "a")


class TestNecessityProfile:
    def test_deltas_and_weights_from_losses(self):
        trace = four_step_trace()
        t = trace.step_texts
        oracle = loss_table_oracle({
            t: 1.0,
            t[1:]: 3.0,
            (t[0],) + t[2:]: 1.0,
            t[:2] + t[3:]: 2.0,
            t[:3]: 1.0,
        })
        profile = necessity_profile(trace, oracle)
        assert profile.deltas == (2.0, 0.0, 1.0, 0.0)
        denom = 3.0 + ETA
        assert profile.weights == pytest.approx((2.0 / denom, 0.0, 1.0 / denom, 0.0))
        assert not profile.degenerate

    def test_all_equal_losses_degenerate(self):
        trace = four_step_trace()
        t = trace.step_texts
        subsets = [t, t[1:], (t[0],) + t[2:], t[:2] + t[3:], t[:3]]
        oracle = loss_table_oracle({texts: 0.7 for texts in subsets})
        profile = necessity_profile(trace, oracle)
        assert profile.deltas == (0.0, 0.0, 0.0, 0.0)
        assert profile.degenerate
        assert profile.weights == (0.0, 0.0, 0.0, 0.0)

    def test_negative_delta_clipped(self):
        profile = NecessityProfile.from_deltas([-1.0, 2.0])
        assert profile.weights[0] == 0.0
        assert profile.weights[1] == pytest.approx(2.0 / (2.0 + ETA))

    def test_loss_unavailable(self):
        trace = four_step_trace()
        oracle = LookupOracle({}, default=OracleResponse("a"))
        with pytest.raises(LossUnavailable):
            necessity_profile(trace, oracle)

    def test_weights_sum_below_one(self):
        profile = NecessityProfile.from_deltas([3.0, 1.0])
        assert 0.0 < sum(profile.weights) < 1.0


class TestNMass:
    def test_top1_and_full_mass(self):
        profile = NecessityProfile.from_deltas([5.0, 3.0, 2.0])
        assert nmass_k(profile, 1) == pytest.approx(0.5, rel=1e-8)
        assert nmass_k(profile, 3) == pytest.approx(1.0, rel=1e-8)

    def test_k_beyond_length_returns_total(self):
        profile = NecessityProfile.from_deltas([1.0, 1.0])
        assert nmass_k(profile, 10) == pytest.approx(sum(profile.weights))

    def test_degenerate_profile_gives_zero(self):
        profile = NecessityProfile.from_deltas([0.0, -1.0])
        for k in (1, 2, 5):
            assert nmass_k(profile, k) == 0.0

    def test_tie_break_prefers_lower_index(self):
        profile = NecessityProfile.from_deltas([1.0, 1.0, 1.0])
        assert topk_indices(profile.weights, 2) == [0, 1]

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            nmass_k(NecessityProfile.from_deltas([1.0]), 0)

    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=1, max_size=10))
    @settings(max_examples=200)
    def test_non_decreasing_in_k_and_at_most_one(self, deltas):
        profile = NecessityProfile.from_deltas(deltas)
        masses = [nmass_k(profile, k) for k in range(1, len(deltas) + 2)]
        assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))
        assert masses[-1] <= 1.0 + 1e-12


def gini_sorted_formula(weights):
    """Independent route: Gini via the sorted-weights identity."""
    w = sorted(weights)
    T = len(w)
    total = sum(w)
    return sum((2 * (i + 1) - T - 1) * wi for i, wi in enumerate(w)) / (T * total)


class TestGini:
    def test_uniform_weights_give_zero(self):
        profile = NecessityProfile.from_deltas([2.0] * 5)
        assert gini(profile) == pytest.approx(0.0, abs=1e-12)

    def test_one_hot_two_steps(self):
        profile = NecessityProfile.from_deltas([3.0, 0.0])
        assert gini(profile) == pytest.approx(0.5)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateProfile):
            gini(NecessityProfile.from_deltas([0.0, 0.0]))

    @given(st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=2, max_size=12)
           .filter(lambda d: sum(d) > 0.1))
    @settings(max_examples=200)
    def test_matches_sorted_formula(self, deltas):
        profile = NecessityProfile.from_deltas(deltas)
        assert gini(profile) == pytest.approx(gini_sorted_formula(profile.weights),
                                              abs=1e-9)

    def test_one_hot_approaches_one_as_T_grows(self):
        small = gini(NecessityProfile.from_deltas([1.0] + [0.0] * 3))
        large = gini(NecessityProfile.from_deltas([1.0] + [0.0] * 19))
        assert small < large < 1.0
        assert large == pytest.approx(19 / 20)


class TestCompression:
    def test_half_retained(self):
        cr, rm = compression(Subset(tuple(range(4)), 8))
        assert (cr, rm) == (0.5, 0.5)

    def test_full_set(self):
        cr, rm = compression(Subset.full(5))
        assert (cr, rm) == (1.0, 0.0)

    @given(st.integers(min_value=1, max_value=30), st.data())
    @settings(max_examples=100)
    def test_cr_plus_rm_is_exactly_one(self, T, data):
        indices = data.draw(st.sets(st.integers(min_value=0, max_value=T - 1)))
        cr, rm = compression(Subset.of(indices, T))
        assert cr + rm == 1.0


class TestRetention:
    def planted_pair(self, seed=0):
        spec = PlantedSpec(T=6, key_indices=(0, 3), rule="all_of_keys_required",
                           seed=seed)
        return generate(spec, trace_id=f"r{seed}")

    def test_full_subsets_retain_everything(self):
        rows = []
        for seed in range(5):
            trace, oracle = self.planted_pair(seed)
            rows.append((trace, Subset.full(len(trace)), oracle))
        assert retention(rows) == 1.0

    def test_greedy_cores_retain_everything(self):
        rows = []
        for seed in range(5):
            trace, oracle = self.planted_pair(seed)
            result = greedy_backward(trace, oracle, ANSWER)
            rows.append((trace, result.core, oracle))
        assert retention(rows) == 1.0

    def test_broken_subsets_counted(self):
        trace, oracle = self.planted_pair()
        rows = [
            (trace, Subset.full(6), oracle),
            (trace, Subset((1, 2), 6), oracle),
        ]
        assert retention(rows) == 0.5

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            retention([])


class TestOvercompletenessCertificate:
    def planted(self):
        spec = PlantedSpec(T=4, key_indices=(0, 2), rule="all_of_keys_required", seed=1)
        return generate(spec, trace_id="cert")

    def test_empty_deletion_set_gives_trivial_bound(self):
        trace, oracle = self.planted()
        record = overcompleteness_certificate(trace, oracle, ANSWER, ())
        assert record is not None
        assert record.bound == 1.0
        assert record.witness == ()

    def test_filler_deletion_bound_met_with_equality(self):
        trace, oracle = self.planted()
        record = overcompleteness_certificate(trace, oracle, ANSWER, (1, 3))
        assert record is not None
        assert record.bound == pytest.approx(0.5)
        truth = exhaustive_minimum(trace, oracle, ANSWER)
        cr, _ = compression(truth.core)
        assert cr <= record.bound + 1e-12
        assert cr == pytest.approx(record.bound)

    def test_deleting_a_key_gives_no_certificate(self):
        trace, oracle = self.planted()
        assert overcompleteness_certificate(trace, oracle, ANSWER, (0,)) is None

    def test_soundness_against_exhaustive_on_random_deletions(self):
        import random
        for seed in range(20):
            rng = random.Random(seed)
            T = rng.randint(2, 8)
            keys = tuple(sorted(rng.sample(range(T), rng.randint(0, T))))
            spec = PlantedSpec(T=T, key_indices=keys, rule="all_of_keys_required",
                               seed=seed)
            trace, oracle = generate(spec, trace_id=f"snd{seed}")
            K = rng.sample(range(T), rng.randint(0, T))
            record = overcompleteness_certificate(trace, oracle, ANSWER, K)
            if record is not None:
                truth = exhaustive_minimum(trace, oracle, ANSWER)
                cr, _ = compression(truth.core)
                assert cr <= record.bound + 1e-12


class TestSparseNecessityCertificate:
    def test_full_index_set_at_gamma_zero(self):
        profile = NecessityProfile.from_deltas([1.0, 2.0, 3.0])
        record = sparse_necessity_certificate(profile, range(3), 0.0)
        assert record is None  # eta keeps the total strictly below 1

        record = sparse_necessity_certificate(profile, range(3), 1e-6)
        assert record is not None
        assert record.bound == pytest.approx(0.0, abs=1e-12)

    def test_one_hot_concentration(self):
        profile = NecessityProfile.from_deltas([0.0, 5.0, 0.0])
        record = sparse_necessity_certificate(profile, {1}, 1e-6)
        assert record is not None
        assert record.witness == (1,)

    def test_uniform_weights_refuse_small_set(self):
        profile = NecessityProfile.from_deltas([1.0, 1.0, 1.0, 1.0])
        assert sparse_necessity_certificate(profile, {0}, 0.5) is None

    @given(st.lists(st.floats(min_value=0.0, max_value=3.0), min_size=1, max_size=10),
           st.data())
    @settings(max_examples=300)
    def test_residual_bounded_by_gamma(self, deltas, data):
        profile = NecessityProfile.from_deltas(deltas)
        members = data.draw(st.sets(st.integers(min_value=0, max_value=len(deltas) - 1)))
        gamma = data.draw(st.floats(min_value=0.0, max_value=1.0))
        record = sparse_necessity_certificate(profile, members, gamma)
        if record is not None:
            assert record.bound <= gamma + 1e-9
            inside = sum(profile.weights[t] for t in members)
            assert inside + record.bound == pytest.approx(sum(profile.weights), abs=1e-9)


class TestLeaveOneOutConsistency:
    def test_zero_delta_deletions_never_flip_the_answer(self):
        # Zero leave-one-out delta under the planted loss means the deletion
        # kept the rule satisfied, so the answer must be preserved too.
        spec = PlantedSpec(T=8, key_indices=(0, 2, 4, 6), rule="any_k_of_keys",
                           threshold=2, seed=13)
        trace, oracle = generate(spec, trace_id="loo")
        profile = necessity_profile(trace, oracle)
        full = Subset.full(8)
        for t, delta in enumerate(profile.deltas):
            if delta == 0.0:
                assert is_sufficient(ANSWER, oracle, trace, full.without(t))
