"""Exception hierarchy shared across the toolkit.

Every failure mode callers are expected to branch on gets its own class so
that harness code can distinguish "skip this trace" conditions from fatal
configuration problems.
"""


class TraceCoreError(Exception):
    """Base class for all toolkit errors."""


# --- trace / segmentation ---------------------------------------------------

class EmptyText(TraceCoreError):
    """Raw trace text contains no non-whitespace content."""


class LengthMismatch(TraceCoreError):
    """A subset's trace_len disagrees with the trace it is applied to."""


# --- oracle -----------------------------------------------------------------

class RemoteError(TraceCoreError):
    """Remote oracle transport failed after retries; trace must be skipped."""


class ProtocolError(TraceCoreError):
    """Remote oracle returned a malformed or inconsistent payload."""


# --- sufficiency ------------------------------------------------------------

class DistributionUnavailable(TraceCoreError):
    """Distribution-mode sufficiency requested but the oracle gave none."""


class EmptySupport(TraceCoreError):
    """KL divergence over an empty aligned candidate set."""


# --- extraction -------------------------------------------------------------

class FullTraceInsufficient(TraceCoreError):
    """The full trace does not reproduce its own answer; skip and log."""


class TraceTooLong(TraceCoreError):
    """Trace exceeds the exhaustive-search length cap."""


# --- metrics ----------------------------------------------------------------

class LossUnavailable(TraceCoreError):
    """Oracle provides no answer loss; necessity deltas cannot be computed."""


class DegenerateProfile(TraceCoreError):
    """All leave-one-out deltas are non-positive; weights are all zero."""


class EmptyInput(TraceCoreError):
    """An aggregate was requested over an empty collection."""


# --- geometry ---------------------------------------------------------------

class EmbedderError(TraceCoreError):
    """Embedding a step failed; carries the step index."""


class ClassImbalance(TraceCoreError):
    """A label class has too few members for probe/kNN evaluation."""


class DegenerateClustering(TraceCoreError):
    """Fewer than two classes, or a class with fewer than two members."""


class CoincidentCentroids(TraceCoreError):
    """Two class centroids coincide; Davies-Bouldin is undefined."""


class ZeroVariance(TraceCoreError):
    """All points identical; participation ratio is undefined."""


class ZeroVector(TraceCoreError):
    """Cosine alignment of a zero vector is undefined."""


# --- synth ------------------------------------------------------------------

class InvalidSpec(TraceCoreError):
    """A planted-trace spec violates its own constraints."""


# --- harness ----------------------------------------------------------------

class CorpusParseError(TraceCoreError):
    """A corpus JSONL row failed to parse; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyCorpus(TraceCoreError):
    """The corpus contains no traces."""


class OracleUnavailable(TraceCoreError):
    """No oracle could be built from the run configuration."""


class MissingEmbeddings(TraceCoreError):
    """Geometry run requested but step embeddings are unavailable."""


class MissingLabels(TraceCoreError):
    """Geometry run requested but correctness labels are missing."""


class MissingMetadata(TraceCoreError):
    """Ablation axis requires metadata the corpus does not carry."""


class MissingReport(TraceCoreError):
    """Plot-data emission requested for a report file that does not exist."""
