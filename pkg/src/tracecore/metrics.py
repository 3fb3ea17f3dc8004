"""Per-trace and corpus-level quantities.

Leave-one-out deltas and their normalized weights, top-k necessity mass,
Gini concentration, compression ratio / redundancy mass, answer retention,
and the two certificate constructions (overcompleteness via a sufficient
deletion set, sparse necessity via concentrated weight mass).
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateProfile, EmptyInput, LossUnavailable
from .oracle import Oracle, canonicalize_answer, query_subset
from .sufficiency import SufficiencyCriterion, is_sufficient
from .trace import Subset, Trace

DEFAULT_ETA = 1e-8


@dataclass(frozen=True)
class NecessityProfile:
    """Per-step deletion deltas and their positive-part-normalized weights.

    weights[t] = max(deltas[t], 0) / (sum_j max(deltas[j], 0) + eta), so the
    weights sum to strictly less than 1 whenever any delta is positive and
    are all zero for degenerate profiles.
    """

    deltas: tuple[float, ...]
    weights: tuple[float, ...]
    eta: float = DEFAULT_ETA
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.deltas)

    @staticmethod
    def from_deltas(deltas, eta: float = DEFAULT_ETA) -> "NecessityProfile":
        deltas = tuple(float(d) for d in deltas)
        positive = [max(d, 0.0) for d in deltas]
        denom = sum(positive) + eta
        weights = tuple(p / denom for p in positive)
        return NecessityProfile(
            deltas=deltas, weights=weights, eta=eta,
            degenerate=sum(positive) == 0.0,
        )


@dataclass(frozen=True)
class CertificateRecord:
    """A witness set together with the bound it implies.

    For kind "overcompleteness" the witness is a sufficient deletion set K
    and bound is the implied CR upper bound (T - |K|) / T. For kind
    "sparse_necessity" the witness is the concentration set C and bound is
    the measured residual weight mass outside C.
    """

    kind: str
    witness: tuple[int, ...]
    bound: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "witness": list(self.witness), "bound": self.bound}


def necessity_profile(trace: Trace, oracle: Oracle,
                      eta: float = DEFAULT_ETA) -> NecessityProfile:
    """Leave-one-out deltas from T+1 oracle queries (full + each deletion).

    Raises LossUnavailable when the oracle reports no answer loss; callers
    downgrade to harm-signal ranking and skip necessity reports.
    """
    T = len(trace)
    full = Subset.full(T)
    full_response = query_subset(oracle, trace, full)
    if full_response.answer_loss is None:
        raise LossUnavailable(f"trace {trace.id}: oracle reports no answer loss")

    deltas = []
    for t in range(T):
        response = query_subset(oracle, trace, full.without(t))
        if response.answer_loss is None:
            raise LossUnavailable(f"trace {trace.id}: no loss for deletion of step {t}")
        deltas.append(response.answer_loss - full_response.answer_loss)
    return NecessityProfile.from_deltas(deltas, eta=eta)


def topk_indices(weights, k: int) -> list[int]:
    """Indices of the k largest weights; ties go to the lower index."""
    order = sorted(range(len(weights)), key=lambda t: (-weights[t], t))
    return order[:k]


def nmass_k(profile: NecessityProfile, k: int) -> float:
    """Sum of the k largest necessity weights (k >= 1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(profile.weights[t] for t in topk_indices(profile.weights, k))


def gini(profile: NecessityProfile) -> float:
    """Gini coefficient of the weight list, zeros included.

    G = sum_ij |w_i - w_j| / (2 T sum_t w_t); 0 for uniform positive
    weights, approaching 1 for one-hot weights as T grows.
    """
    if profile.degenerate:
        raise DegenerateProfile("all necessity weights are zero")
    w = profile.weights
    T = len(w)
    total = sum(w)
    abs_diffs = sum(abs(wi - wj) for wi in w for wj in w)
    return abs_diffs / (2.0 * T * total)


def compression(core: Subset) -> tuple[float, float]:
    """(CR, RM) for a retained subset: |S|/T and its complement mass."""
    if core.trace_len == 0:
        raise ValueError("compression undefined for zero-length traces")
    cr = len(core) / core.trace_len
    return cr, 1.0 - cr


def retention(results) -> float:
    """Fraction of (trace, subset, oracle) triples preserving the answer."""
    results = list(results)
    if not results:
        raise EmptyInput("retention over an empty result list")
    preserved = 0
    for trace, subset, oracle in results:
        answer = query_subset(oracle, trace, subset).answer
        if canonicalize_answer(answer) == canonicalize_answer(trace.full_answer):
            preserved += 1
    return preserved / len(results)


def overcompleteness_certificate(trace: Trace, oracle: Oracle,
                                 criterion: SufficiencyCriterion,
                                 K) -> CertificateRecord | None:
    """Certificate from a deletion set K, if deleting K keeps sufficiency.

    A sufficient deletion of k steps bounds any minimal core: CR <= (T-k)/T
    and RM >= k/T. Returns None when the deletion is not sufficient.
    """
    T = len(trace)
    deleted = sorted(set(K))
    if any(not 0 <= t < T for t in deleted):
        raise ValueError("deletion set contains out-of-range indices")
    kept = Subset(tuple(t for t in range(T) if t not in set(deleted)), T)
    if not is_sufficient(criterion, oracle, trace, kept):
        return None
    return CertificateRecord(
        kind="overcompleteness",
        witness=tuple(deleted),
        bound=(T - len(deleted)) / T,
    )


def sparse_necessity_certificate(profile: NecessityProfile, C,
                                 gamma: float) -> CertificateRecord | None:
    """Certificate that weight mass outside C is at most gamma.

    Issued iff sum_{t in C} w_t >= 1 - gamma; the stored bound is the
    measured residual mass, which the construction guarantees is <= gamma.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    members = sorted(set(C))
    if any(not 0 <= t < len(profile) for t in members):
        raise ValueError("concentration set contains out-of-range indices")
    inside = sum(profile.weights[t] for t in members)
    if inside < 1.0 - gamma:
        return None
    member_set = set(members)
    residual = sum(w for t, w in enumerate(profile.weights) if t not in member_set)
    return CertificateRecord(
        kind="sparse_necessity",
        witness=tuple(members),
        bound=residual,
    )
