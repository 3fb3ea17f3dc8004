"""Synthetic corpora with planted minimal cores and rule-based oracles.

Every generated trace carries "key" steps tagged with ``key:<int>`` markers
and filler steps without markers. The matching oracle evaluates its rule by
scanning the retained text for markers, so it keeps working when steps are
re-segmented, merged, or fed to a different oracle instance. The planted
core (and therefore CR/RM ground truth) is known by construction, which is
what lets brute-force tests validate every extraction claim.

Rules:
  sum_of_keys           answer is the sum of retained marker values; the
                        answer is preserved exactly when every key step is
                        retained (all marker values are positive).
  all_of_keys_required  answer preserved iff every marker is retained.
  any_k_of_keys         answer preserved iff at least ``threshold`` markers
                        are retained; members of the group are mutually
                        substitutable.

The simulated answer loss is -ln(p) with p = 0.9 for rule-satisfying
subsets and p = 0.1 * (retained marker fraction) + 0.05 otherwise, giving
graded, deterministic leave-one-out deltas without a real model. A nonzero
``context_sensitivity`` makes p for satisfying subsets decay linearly with
the fraction of deleted steps, so distribution-preserving criteria with
small epsilon genuinely restrict how much can be removed.
"""
from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec
from .oracle import Oracle, OracleResponse, OracleSpec
from .trace import Trace

KEY_MARKER = re.compile(r"key:(-?\d+)")

_FILLER_TEMPLATES = (
    "Restating the problem in plainer terms before proceeding further.",
    "This intermediate observation does not change the quantities involved.",
    "As a sanity check, the setup so far remains internally consistent.",
    "An alternative route would reach the same intermediate point eventually.",
    "Paraphrasing the previous step for clarity of exposition only.",
    "Unrelated surface details of the scenario can safely be ignored.",
    "Reviewing the assumptions again before moving to the next operation.",
    "The notation is kept unchanged to avoid confusing the derivation.",
)

_KEY_TEMPLATE = "Apply the planted relation key:{value} and carry the result forward."

RULES = ("sum_of_keys", "all_of_keys_required", "any_k_of_keys")


@dataclass(frozen=True)
class PlantedSpec:
    """Blueprint for one synthetic trace and its oracle."""

    T: int
    key_indices: tuple[int, ...]
    rule: str
    threshold: int = 0
    filler_style: str = "default"
    seed: int = 0
    context_sensitivity: float = 0.0
    provide_loss: bool = True
    provide_distribution: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise InvalidSpec("T must be >= 1")
        if self.rule not in RULES:
            raise InvalidSpec(f"unknown rule {self.rule!r}")
        if any(not 0 <= k < self.T for k in self.key_indices):
            raise InvalidSpec("key indices must lie in [0, T)")
        if len(set(self.key_indices)) != len(self.key_indices):
            raise InvalidSpec("key indices must be distinct")
        if self.rule == "any_k_of_keys" and self.threshold > len(self.key_indices):
            raise InvalidSpec("threshold exceeds key group size")
        if not 0.0 <= self.context_sensitivity <= 0.3:
            raise InvalidSpec("context_sensitivity must be in [0, 0.3]")


class PlantedRuleOracle(Oracle):
    """Deterministic oracle whose answer is computable in closed form.

    The answer for any retained subset depends only on the key markers (and
    for nonzero context sensitivity, the retained step count), so ground
    truth for sufficiency of every subset is known exactly.
    """

    def __init__(self, name: str, rule: str, trace_len: int,
                 key_values: tuple[int, ...], threshold: int = 0,
                 context_sensitivity: float = 0.0,
                 provide_loss: bool = True, provide_distribution: bool = True):
        super().__init__()
        if rule not in RULES:
            raise InvalidSpec(f"unknown rule {rule!r}")
        self.name = name
        self.rule = rule
        self.trace_len = trace_len
        self.key_values = tuple(key_values)
        self.threshold = threshold
        self.context_sensitivity = context_sensitivity
        self.provide_loss = provide_loss
        self.provide_distribution = provide_distribution
        self.total_markers = len(self.key_values)
        self.full_answer = str(sum(self.key_values))

    @property
    def identity(self) -> str:
        return (
            f"planted:{self.name}:{self.rule}:{self.trace_len}"
            f":{','.join(map(str, self.key_values))}:{self.threshold}"
            f":{self.context_sensitivity}"
        )

    # -- rule evaluation ----------------------------------------------------

    def retained_values(self, step_texts: tuple[str, ...]) -> list[int]:
        return [int(v) for text in step_texts for v in KEY_MARKER.findall(text)]

    def is_satisfied(self, step_texts: tuple[str, ...]) -> bool:
        values = self.retained_values(step_texts)
        if self.rule == "sum_of_keys":
            return sum(values) == sum(self.key_values) and len(values) == self.total_markers
        if self.rule == "all_of_keys_required":
            return len(values) == self.total_markers
        return len(values) >= self.threshold

    def evaluate(self, input: str, step_texts: tuple[str, ...]) -> OracleResponse:
        values = self.retained_values(step_texts)
        satisfied = self.is_satisfied(step_texts)

        if self.rule == "sum_of_keys":
            subset_answer = str(sum(values))
        else:
            subset_answer = self.full_answer if satisfied else f"partial-{len(values)}"

        if satisfied:
            removed_frac = 0.0
            if self.trace_len > 0:
                removed_frac = max(0.0, 1.0 - len(step_texts) / self.trace_len)
            p_full = 0.9 - self.context_sensitivity * removed_frac
        else:
            frac = len(values) / self.total_markers if self.total_markers else 1.0
            p_full = 0.1 * frac + 0.05

        distribution = None
        if self.provide_distribution:
            alt = subset_answer if subset_answer != self.full_answer else "other"
            distribution = ((self.full_answer, p_full), (alt, 1.0 - p_full))

        return OracleResponse(
            answer=subset_answer,
            distribution=distribution,
            answer_loss=-math.log(p_full) if self.provide_loss else None,
            harm_signal=None if self.provide_loss else 1.0 - p_full,
        )

    # -- serialization ------------------------------------------------------

    def to_oracle_spec(self) -> OracleSpec:
        return OracleSpec(kind="planted_rule", params={
            "name": self.name,
            "rule": self.rule,
            "trace_len": self.trace_len,
            "key_values": list(self.key_values),
            "threshold": self.threshold,
            "context_sensitivity": self.context_sensitivity,
            "provide_loss": self.provide_loss,
            "provide_distribution": self.provide_distribution,
        })

    @staticmethod
    def from_params(params: dict) -> "PlantedRuleOracle":
        return PlantedRuleOracle(
            name=params["name"],
            rule=params["rule"],
            trace_len=int(params["trace_len"]),
            key_values=tuple(int(v) for v in params["key_values"]),
            threshold=int(params.get("threshold", 0)),
            context_sensitivity=float(params.get("context_sensitivity", 0.0)),
            provide_loss=bool(params.get("provide_loss", True)),
            provide_distribution=bool(params.get("provide_distribution", True)),
        )


def generate(spec: PlantedSpec, trace_id: str = "planted-0") -> tuple[Trace, PlantedRuleOracle]:
    """Build one planted trace and its matching oracle, deterministically."""
    rng = random.Random(spec.seed)
    key_set = set(spec.key_indices)
    key_values = tuple(rng.randint(1, 9) for _ in spec.key_indices)
    value_by_index = dict(zip(sorted(key_set), key_values))

    texts = []
    for t in range(spec.T):
        if t in key_set:
            texts.append(_KEY_TEMPLATE.format(value=value_by_index[t]))
        else:
            texts.append(rng.choice(_FILLER_TEMPLATES))

    oracle = PlantedRuleOracle(
        name=trace_id,
        rule=spec.rule,
        trace_len=spec.T,
        key_values=tuple(value_by_index[t] for t in sorted(key_set)),
        threshold=spec.threshold,
        context_sensitivity=spec.context_sensitivity,
        provide_loss=spec.provide_loss,
        provide_distribution=spec.provide_distribution,
    )

    full = oracle.evaluate("", tuple(texts))
    trace = Trace.from_texts(
        id=trace_id,
        input=f"Combine the tagged quantities to answer problem {trace_id}.",
        texts=texts,
        full_answer=full.answer,
        metadata={
            "rule": spec.rule,
            "planted_core": sorted(key_set),
            "threshold": spec.threshold,
        },
    )
    return trace, oracle


@dataclass(frozen=True)
class CorpusSpec:
    """Distribution over PlantedSpec plus embedding parameters."""

    n: int
    trace_lens: tuple[int, ...] = (8,)
    key_fractions: tuple[float, ...] = (0.5,)
    rules: tuple[str, ...] = ("all_of_keys_required",)
    threshold_fraction: float = 0.5
    context_sensitivity: float = 0.0
    provide_loss: bool = True
    provide_distribution: bool = True
    seed: int = 0
    embed_dim: int = 16
    key_sigma: float = 0.3
    filler_sigma: float = 1.0
    correct_rate: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSpec("n must be >= 1")
        for r in self.rules:
            if r not in RULES:
                raise InvalidSpec(f"unknown rule {r!r}")


@dataclass
class Corpus:
    """Generated traces with their oracles, embeddings, and ground truth."""

    traces: list[Trace]
    oracles: dict[str, PlantedRuleOracle]
    embeddings: dict[str, np.ndarray]
    specs: dict[str, PlantedSpec] = field(default_factory=dict)

    def oracle_for(self, trace: Trace) -> PlantedRuleOracle:
        return self.oracles[trace.id]


def render_raw_trace(trace: Trace, paragraph_pair_size: int = 2) -> str:
    """Numbered rendering with a blank line after every pair of steps.

    Gives the three segmentation kinds distinct granularities on the same
    text: numbered recovers the original steps, sentence splits comparably,
    and paragraph merges each pair into one coarse step.
    """
    lines = []
    for i, text in enumerate(trace.step_texts):
        lines.append(f"{i + 1}. {text}")
        if paragraph_pair_size and (i + 1) % paragraph_pair_size == 0:
            lines.append("")
    return "\n".join(lines).strip()


def _difficulty_tag(key_fraction: float) -> str:
    if key_fraction <= 0.35:
        return "easy"
    if key_fraction <= 0.55:
        return "medium"
    return "hard"


def generate_corpus(corpus_spec: CorpusSpec) -> Corpus:
    """Sample n planted traces; byte-identical output for identical specs.

    Step embeddings are planted so the label signal lives on key steps:
    key steps sit near +/- e1 depending on the trace's correctness label
    while fillers are label-independent isotropic noise.
    """
    rng = random.Random(corpus_spec.seed)
    vec_rng = np.random.default_rng(corpus_spec.seed)

    traces: list[Trace] = []
    oracles: dict[str, PlantedRuleOracle] = {}
    embeddings: dict[str, np.ndarray] = {}
    specs: dict[str, PlantedSpec] = {}

    for i in range(corpus_spec.n):
        T = rng.choice(corpus_spec.trace_lens)
        key_fraction = rng.choice(corpus_spec.key_fractions)
        rule = rng.choice(corpus_spec.rules)
        n_keys = max(0, min(T, round(key_fraction * T)))
        key_indices = tuple(sorted(rng.sample(range(T), n_keys)))
        threshold = 0
        if rule == "any_k_of_keys":
            threshold = max(1, int(corpus_spec.threshold_fraction * n_keys)) if n_keys else 0

        spec = PlantedSpec(
            T=T,
            key_indices=key_indices,
            rule=rule,
            threshold=threshold,
            seed=rng.randrange(2**31),
            context_sensitivity=corpus_spec.context_sensitivity,
            provide_loss=corpus_spec.provide_loss,
            provide_distribution=corpus_spec.provide_distribution,
        )
        trace_id = f"planted-{corpus_spec.seed}-{i:05d}"
        trace, oracle = generate(spec, trace_id=trace_id)

        correct = rng.random() < corpus_spec.correct_rate
        metadata = dict(trace.metadata)
        metadata["difficulty"] = _difficulty_tag(key_fraction)
        trace = Trace(
            id=trace.id, input=trace.input, steps=trace.steps,
            full_answer=trace.full_answer, correct_label=correct,
            metadata=metadata,
        )

        label_sign = 1.0 if correct else -1.0
        vectors = np.zeros((T, corpus_spec.embed_dim))
        key_set = set(key_indices)
        for t in range(T):
            if t in key_set:
                vectors[t] = vec_rng.normal(0.0, corpus_spec.key_sigma,
                                            corpus_spec.embed_dim)
                vectors[t, 0] += label_sign
            else:
                vectors[t] = vec_rng.normal(0.0, corpus_spec.filler_sigma,
                                            corpus_spec.embed_dim)

        traces.append(trace)
        oracles[trace_id] = oracle
        embeddings[trace_id] = vectors
        specs[trace_id] = spec

    return Corpus(traces=traces, oracles=oracles, embeddings=embeddings, specs=specs)
