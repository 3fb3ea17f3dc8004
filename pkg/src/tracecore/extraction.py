"""Minimal-core extraction.

Greedy backward elimination repeatedly deletes the admissible step with the
smallest estimated harm (ties broken by original index) and recomputes
admissibility after every accepted deletion, terminating at a locally
irreducible sufficient subset in at most O(T^2) sufficiency checks. One-shot
necessity-guided pruning orders steps by increasing leave-one-out delta and
walks that order once; random deletion and exhaustive search bracket the
two from below and above.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

from .errors import FullTraceInsufficient, TraceTooLong
from .metrics import NecessityProfile
from .oracle import Oracle
from .sufficiency import HarmScore, SufficiencyCriterion, harm, is_sufficient
from .trace import Subset, Trace

DEFAULT_EXHAUSTIVE_MAX_T = 14

METHODS = ("greedy", "necessity_guided", "random", "exhaustive")


@dataclass(frozen=True)
class CoreResult:
    """An extracted subset plus the audit trail that produced it.

    path records accepted deletions in order; core and the deleted indices
    always partition the trace. irreducible means no single retained step
    can be deleted while preserving sufficiency. sufficient is False only
    for unconditional-deletion baselines whose result broke sufficiency.
    """

    method: str
    core: Subset
    path: tuple[tuple[int, HarmScore], ...]
    sufficiency_checks: int
    irreducible: bool
    sufficient: bool = True
    seed: int | None = None
    variant: str = "checked"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        deleted = [t for t, _ in self.path]
        if len(set(deleted)) != len(deleted):
            raise ValueError("path deletes an index twice")
        union = set(self.core.indices) | set(deleted)
        if set(self.core.indices) & set(deleted):
            raise ValueError("core and deleted indices overlap")
        if union != set(range(self.core.trace_len)):
            raise ValueError("core and path do not partition the trace")

    @property
    def deleted_indices(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.path)


def deletion_count(removal_rate: float, trace_len: int) -> int:
    """floor(removal_rate * trace_len), guarded against float dust.

    Plain int(rate * T) under-counts when the product lands a hair below
    an integer (0.58 * 50 == 28.999...96); the epsilon restores the exact
    rational floor for any human-scale rate and length.
    """
    return min(trace_len, math.floor(removal_rate * trace_len + 1e-9))


class _CheckCounter:
    """Counts oracle-backed sufficiency predicate evaluations."""

    def __init__(self, criterion: SufficiencyCriterion, oracle: Oracle, trace: Trace):
        self.criterion = criterion
        self.oracle = oracle
        self.trace = trace
        self.count = 0

    def __call__(self, subset: Subset) -> bool:
        self.count += 1
        return is_sufficient(self.criterion, self.oracle, self.trace, subset)


def greedy_backward(trace: Trace, oracle: Oracle,
                    criterion: SufficiencyCriterion) -> CoreResult:
    """Greedy backward elimination to a locally irreducible sufficient core.

    Each round evaluates every remaining single-step deletion; among the
    admissible ones, the (harm value, original index) minimum is deleted
    and the admissible set is recomputed, since deletions change step
    interactions. Raises FullTraceInsufficient if the full trace does not
    reproduce its own answer.
    """
    T = len(trace)
    check = _CheckCounter(criterion, oracle, trace)
    subset = Subset.full(T)
    if not check(subset):
        raise FullTraceInsufficient(trace.id)

    path: list[tuple[int, HarmScore]] = []
    while True:
        admissible = [t for t in subset.indices if check(subset.without(t))]
        if not admissible:
            break
        scored = [(harm(oracle, trace, subset, t), t) for t in admissible]
        best_harm, best_t = min(scored, key=lambda ht: (ht[0].value, ht[1]))
        subset = subset.without(best_t)
        path.append((best_t, best_harm))

    return CoreResult(
        method="greedy", core=subset, path=tuple(path),
        sufficiency_checks=check.count, irreducible=True,
    )


def deletion_ranking(trace: Trace, oracle: Oracle,
                     profile: NecessityProfile | None) -> list[int]:
    """Step order for one-shot pruning: increasing necessity, index ties.

    Uses profile deltas when available; otherwise falls back to the harm
    chain evaluated against the full trace (and hence to plain index order
    when the oracle provides no ranking signal at all).
    """
    T = len(trace)
    if profile is not None:
        scores = profile.deltas
    else:
        full = Subset.full(T)
        scores = [harm(oracle, trace, full, t).value for t in range(T)]
    return sorted(range(T), key=lambda t: (scores[t], t))


def necessity_guided(trace: Trace, oracle: Oracle, criterion: SufficiencyCriterion,
                     profile: NecessityProfile | None = None,
                     blind: bool = False,
                     removal_rate: float | None = None) -> CoreResult:
    """One-shot pruning in order of increasing leave-one-out necessity.

    The default (checked) variant accepts a deletion only when the result
    stays sufficient and never re-ranks after deletions; the result is
    sufficient but not necessarily irreducible. The blind variant deletes
    the lowest-necessity floor(removal_rate * T) steps unconditionally and
    only records whether the outcome is sufficient; it exists for matched
    removal-budget baselines.
    """
    T = len(trace)
    check = _CheckCounter(criterion, oracle, trace)
    if not check(Subset.full(T)):
        raise FullTraceInsufficient(trace.id)

    order = deletion_ranking(trace, oracle, profile)

    def harm_for(t: int) -> HarmScore:
        if profile is not None:
            return HarmScore(value=profile.deltas[t], source="loss_increase")
        return HarmScore(value=0.0, source="zero_fallback")

    subset = Subset.full(T)
    path: list[tuple[int, HarmScore]] = []

    if blind:
        if removal_rate is None or not 0.0 <= removal_rate <= 1.0:
            raise ValueError("blind pruning needs removal_rate in [0, 1]")
        for t in order[: deletion_count(removal_rate, T)]:
            subset = subset.without(t)
            path.append((t, harm_for(t)))
        sufficient = check(subset)
        return CoreResult(
            method="necessity_guided", core=subset, path=tuple(path),
            sufficiency_checks=check.count, irreducible=False,
            sufficient=sufficient, variant="blind",
        )

    for t in order:
        candidate = subset.without(t)
        if check(candidate):
            subset = candidate
            path.append((t, harm_for(t)))
    return CoreResult(
        method="necessity_guided", core=subset, path=tuple(path),
        sufficiency_checks=check.count, irreducible=False,
        sufficient=True, variant="checked",
    )


def random_deletion(trace: Trace, oracle: Oracle, criterion: SufficiencyCriterion,
                    removal_rate: float, seed: int) -> CoreResult:
    """Delete floor(removal_rate * T) uniform steps, unconditionally.

    Deterministic per seed. Sufficiency of the result is recorded, not
    enforced; retention is measured downstream.
    """
    if not 0.0 <= removal_rate <= 1.0:
        raise ValueError("removal_rate must be in [0, 1]")
    T = len(trace)
    rng = random.Random(seed)
    deleted = rng.sample(range(T), deletion_count(removal_rate, T))

    subset = Subset.full(T)
    path = []
    for t in deleted:
        subset = subset.without(t)
        path.append((t, HarmScore(value=0.0, source="zero_fallback")))

    check = _CheckCounter(criterion, oracle, trace)
    sufficient = check(subset)
    return CoreResult(
        method="random", core=subset, path=tuple(path),
        sufficiency_checks=check.count, irreducible=False,
        sufficient=sufficient, seed=seed,
    )


def exhaustive_minimum(trace: Trace, oracle: Oracle, criterion: SufficiencyCriterion,
                       max_T: int = DEFAULT_EXHAUSTIVE_MAX_T) -> CoreResult:
    """True minimal core by enumeration: increasing cardinality, then
    lexicographic order within each cardinality; the empty subset is
    checked first. Global minimality implies the result is irreducible.
    """
    T = len(trace)
    if T > max_T:
        raise TraceTooLong(f"trace {trace.id}: T={T} exceeds max_T={max_T}")

    check = _CheckCounter(criterion, oracle, trace)
    for size in range(T + 1):
        for combo in itertools.combinations(range(T), size):
            subset = Subset(combo, T)
            if check(subset):
                kept = set(combo)
                path = tuple(
                    (t, HarmScore(value=0.0, source="zero_fallback"))
                    for t in range(T) if t not in kept
                )
                return CoreResult(
                    method="exhaustive", core=subset, path=path,
                    sufficiency_checks=check.count, irreducible=True,
                )
    raise FullTraceInsufficient(trace.id)


def budget_matched_subset(result: CoreResult, trace: Trace,
                          removal_budget: float) -> Subset:
    """Subset along the greedy path closest to the requested removal budget.

    If the path terminated before the budget, the terminal subset is the
    closest point and gets returned; equidistant path points resolve to the
    smaller removal fraction.
    """
    if result.method != "greedy":
        raise ValueError("budget matching is defined on greedy paths")
    if not 0.0 <= removal_budget <= 1.0:
        raise ValueError("removal_budget must be in [0, 1]")

    T = len(trace)
    subset = Subset.full(T)
    points = [subset]
    for t, _ in result.path:
        subset = subset.without(t)
        points.append(subset)

    best = points[0]
    best_gap = abs(points[0].removal_fraction - removal_budget)
    for point in points[1:]:
        gap = abs(point.removal_fraction - removal_budget)
        if gap < best_gap:
            best, best_gap = point, gap
    return best
