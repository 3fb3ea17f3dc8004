"""Minimal sufficient cores and representation analytics for reasoning traces."""

__version__ = "0.1.0"

from .trace import SegmentationRule, Step, Subset, Trace, segment, subsequence
from .oracle import (
    HttpOracle,
    HttpOracleConfig,
    LookupOracle,
    Oracle,
    OracleResponse,
    OracleSpec,
    build_oracle,
    canonicalize_answer,
)
from .sufficiency import HarmScore, SufficiencyCriterion, harm, is_sufficient, kl_divergence
from .extraction import (
    CoreResult,
    budget_matched_subset,
    exhaustive_minimum,
    greedy_backward,
    necessity_guided,
    random_deletion,
)
from .metrics import (
    CertificateRecord,
    NecessityProfile,
    compression,
    gini,
    necessity_profile,
    nmass_k,
    overcompleteness_certificate,
    retention,
    sparse_necessity_certificate,
)
from .geometry import (
    HashEmbedder,
    TraceEmbeddings,
    cosine_alignment,
    davies_bouldin,
    embed_steps,
    group_variance,
    knn_accuracy,
    linear_probe_accuracy,
    participation_ratio,
    silhouette,
    trace_embeddings,
)
from .synth import Corpus, CorpusSpec, PlantedRuleOracle, PlantedSpec, generate, generate_corpus

__all__ = [
    "SegmentationRule", "Step", "Subset", "Trace", "segment", "subsequence",
    "HttpOracle", "HttpOracleConfig", "LookupOracle", "Oracle", "OracleResponse",
    "OracleSpec", "build_oracle", "canonicalize_answer",
    "HarmScore", "SufficiencyCriterion", "harm", "is_sufficient", "kl_divergence",
    "CoreResult", "budget_matched_subset", "exhaustive_minimum", "greedy_backward",
    "necessity_guided", "random_deletion",
    "CertificateRecord", "NecessityProfile", "compression", "gini",
    "necessity_profile", "nmass_k", "overcompleteness_certificate", "retention",
    "sparse_necessity_certificate",
    "HashEmbedder", "TraceEmbeddings", "cosine_alignment", "davies_bouldin",
    "embed_steps", "group_variance", "knn_accuracy", "linear_probe_accuracy",
    "participation_ratio", "silhouette", "trace_embeddings",
    "Corpus", "CorpusSpec", "PlantedRuleOracle", "PlantedSpec", "generate",
    "generate_corpus",
]
