"""Sufficiency predicates: answer preservation and KL-bounded distributions.

A subset is answer-sufficient when the oracle's answer under the retained
steps matches the trace's full-context answer after canonicalization. The
stricter distribution mode bounds the KL divergence between the subset's
candidate-answer distribution and the full trace's.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DistributionUnavailable, EmptySupport
from .oracle import Oracle, canonicalize_answer, query_subset
from .trace import Subset, Trace

# Reference-distribution floor applied before the log.
KL_FLOOR = 1e-12


@dataclass(frozen=True)
class SufficiencyCriterion:
    """Which preservation notion to test, and how strictly.

    kind "answer" ignores epsilon. kind "distribution" accepts a subset iff
    KL(p_subset || p_full) <= epsilon; the argument order is pinned here and
    can be flipped with kl_reversed for sensitivity checks. epsilon=inf is
    pinned to "always sufficient".
    """

    kind: str = "answer"
    epsilon: float = 0.0
    kl_reversed: bool = False

    def __post_init__(self):
        if self.kind not in ("answer", "distribution"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class HarmScore:
    """Estimated damage of one deletion, with the signal that produced it."""

    value: float
    source: str  # loss_increase | harm_signal | zero_fallback

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("harm value must be finite")


def kl_divergence(p, q) -> float:
    """KL(p || q) over candidate answers, aligned by union of supports.

    Candidates are canonicalized and merged before alignment; q components
    are floored at 1e-12 before the log and both sides are renormalized.
    Zero p components contribute nothing (0 * ln 0 = 0).
    """
    p_map = _merge_candidates(p)
    q_map = _merge_candidates(q)
    support = sorted(set(p_map) | set(q_map))
    if not support:
        raise EmptySupport("aligned candidate set is empty")

    p_vals = [max(p_map.get(c, 0.0), 0.0) for c in support]
    q_vals = [max(q_map.get(c, 0.0), KL_FLOOR) for c in support]

    p_total = sum(p_vals)
    q_total = sum(q_vals)
    if p_total <= 0.0:
        raise EmptySupport("p carries no probability mass")
    p_vals = [v / p_total for v in p_vals]
    q_vals = [v / q_total for v in q_vals]

    total = 0.0
    for pv, qv in zip(p_vals, q_vals):
        if pv > 0.0:
            total += pv * math.log(pv / qv)
    return total


def _merge_candidates(distribution) -> dict[str, float]:
    merged: dict[str, float] = {}
    for candidate, prob in distribution:
        key = canonicalize_answer(candidate)
        merged[key] = merged.get(key, 0.0) + float(prob)
    return merged


def is_sufficient(criterion: SufficiencyCriterion, oracle: Oracle,
                  trace: Trace, subset: Subset) -> bool:
    """Does the retained subset preserve the trace's full-context answer
    (or distribution, within epsilon)?

    Answer mode compares against trace.full_answer, the model's own
    full-trace answer, not any gold label.
    """
    if criterion.kind == "distribution" and math.isinf(criterion.epsilon):
        return True

    response = query_subset(oracle, trace, subset)
    if criterion.kind == "answer":
        return canonicalize_answer(response.answer) == canonicalize_answer(trace.full_answer)

    full_response = query_subset(oracle, trace, Subset.full(len(trace)))
    if response.distribution is None or full_response.distribution is None:
        raise DistributionUnavailable(
            "distribution-mode sufficiency needs distributions from the oracle"
        )
    if criterion.kl_reversed:
        divergence = kl_divergence(full_response.distribution, response.distribution)
    else:
        divergence = kl_divergence(response.distribution, full_response.distribution)
    return divergence <= criterion.epsilon


def harm(oracle: Oracle, trace: Trace, current: Subset, candidate_step: int) -> HarmScore:
    """Estimated harm of deleting candidate_step from the current subset.

    Prefers the loss increase when the oracle reports answer losses, falls
    back to the deleted state's harm signal, and finally to zero (which
    leaves ranking to the original index order). Total: never raises.
    """
    if candidate_step not in current:
        raise ValueError(f"step {candidate_step} not in current subset")

    deleted = current.without(candidate_step)
    current_response = query_subset(oracle, trace, current)
    deleted_response = query_subset(oracle, trace, deleted)

    if (current_response.answer_loss is not None
            and deleted_response.answer_loss is not None):
        return HarmScore(
            value=deleted_response.answer_loss - current_response.answer_loss,
            source="loss_increase",
        )
    if deleted_response.harm_signal is not None:
        return HarmScore(value=deleted_response.harm_signal, source="harm_signal")
    return HarmScore(value=0.0, source="zero_fallback")
