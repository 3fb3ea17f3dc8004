"""Traces, steps, ordered subsets, and deterministic segmentation.

A trace is an ordered list of textual reasoning steps plus the answer the
model produced with the full trace in context. Subsets are index sets over
those steps; everything downstream (sufficiency, extraction, metrics) is
defined over subsets. Indices are 0-based everywhere, including on disk.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import EmptyText, LengthMismatch

# Sentence splits are suppressed right after these tokens.
_ABBREVIATIONS = (
    "e.g.", "i.e.", "etc.", "cf.", "vs.", "al.", "dr.", "mr.", "mrs.",
    "ms.", "prof.", "fig.", "eq.", "no.", "approx.", "sec.", "app.",
)

_NUMBERED_MARKER = re.compile(r"^[ \t]*\d+[.)][ \t]+", re.MULTILINE)
_BLANK_LINE = re.compile(r"\n[ \t]*\n+")


@dataclass(frozen=True)
class Step:
    """One reasoning unit: its original position and text content."""

    index: int
    text: str
    span: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"step {self.index} has empty text")


@dataclass(frozen=True)
class Trace:
    """A step-segmented reasoning trace with its full-context answer."""

    id: str
    input: str
    steps: tuple[Step, ...]
    full_answer: str
    correct_label: bool | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ValueError(f"trace {self.id}: needs at least one step")
        if not self.full_answer:
            raise ValueError(f"trace {self.id}: full_answer is empty")
        for pos, step in enumerate(self.steps):
            if step.index != pos:
                raise ValueError(
                    f"trace {self.id}: step at position {pos} has index {step.index}"
                )

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def step_texts(self) -> tuple[str, ...]:
        return tuple(s.text for s in self.steps)

    @staticmethod
    def from_texts(id: str, input: str, texts, full_answer: str,
                   correct_label: bool | None = None,
                   metadata: dict | None = None) -> "Trace":
        steps = tuple(Step(i, t) for i, t in enumerate(texts))
        return Trace(id, input, steps, full_answer, correct_label, metadata or {})


@dataclass(frozen=True, order=True)
class Subset:
    """A strictly increasing index set over a trace's steps.

    The empty subset is valid: it denotes answering with no retained steps.
    """

    indices: tuple[int, ...]
    trace_len: int

    def __post_init__(self):
        if self.trace_len < 0:
            raise ValueError("trace_len must be non-negative")
        prev = -1
        for i in self.indices:
            if not 0 <= i < self.trace_len:
                raise ValueError(f"index {i} out of range [0, {self.trace_len})")
            if i <= prev:
                raise ValueError("indices must be strictly increasing")
            prev = i

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, index: int) -> bool:
        return index in self.indices

    @staticmethod
    def full(trace_len: int) -> "Subset":
        return Subset(tuple(range(trace_len)), trace_len)

    @staticmethod
    def of(indices, trace_len: int) -> "Subset":
        return Subset(tuple(sorted(set(indices))), trace_len)

    def without(self, index: int) -> "Subset":
        if index not in self.indices:
            raise ValueError(f"index {index} not in subset")
        return Subset(tuple(i for i in self.indices if i != index), self.trace_len)

    def complement(self) -> "Subset":
        kept = set(self.indices)
        return Subset(tuple(i for i in range(self.trace_len) if i not in kept),
                      self.trace_len)

    @property
    def removal_fraction(self) -> float:
        if self.trace_len == 0:
            return 0.0
        return (self.trace_len - len(self.indices)) / self.trace_len


@dataclass(frozen=True)
class SegmentationRule:
    """How raw trace text is cut into steps.

    kind "numbered" splits at line-leading markers like "3." or "3)";
    "sentence" splits at terminal punctuation followed by whitespace and an
    uppercase letter or digit, skipping a fixed abbreviation list and $...$
    math spans; "paragraph" splits on blank lines only. For the unnumbered
    kinds, fragments shorter than merge_min_chars are folded into their
    predecessor; explicit numbering always forces the split.
    """

    kind: str = "numbered"
    merge_min_chars: int = 20

    def __post_init__(self):
        if self.kind not in ("numbered", "sentence", "paragraph"):
            raise ValueError(f"unknown segmentation kind {self.kind!r}")
        if self.merge_min_chars < 0:
            raise ValueError("merge_min_chars must be non-negative")


def segment(raw_text: str, rule: SegmentationRule) -> list[Step]:
    """Deterministically cut raw trace text into steps.

    Identical text and rule always produce identical step lists. Each step
    carries its character span and its text is exactly raw_text sliced at
    that span. Raises EmptyText when the input is all whitespace.
    """
    if not raw_text.strip():
        raise EmptyText("raw trace text is empty or all whitespace")

    if rule.kind == "numbered":
        spans = _split_numbered(raw_text)
    elif rule.kind == "sentence":
        spans = _split_sentences(raw_text)
    else:
        spans = _split_paragraphs(raw_text)

    spans = _strip_spans(raw_text, spans)
    # Explicit numbering forces the split; short-continuation merging only
    # applies to the unnumbered segmentation kinds.
    if rule.kind != "numbered":
        spans = _merge_short(spans, rule.merge_min_chars)
    return [Step(i, raw_text[a:b], span=(a, b)) for i, (a, b) in enumerate(spans)]


def subsequence(trace: Trace, subset: Subset) -> list[Step]:
    """Steps at the subset's indices, original order preserved."""
    if subset.trace_len != len(trace):
        raise LengthMismatch(
            f"subset built for length {subset.trace_len}, trace has {len(trace)}"
        )
    return [trace.steps[i] for i in subset.indices]


def render_numbered(texts) -> str:
    """Render step texts as a numbered listing (1-based markers)."""
    return "\n".join(f"{i + 1}. {t}" for i, t in enumerate(texts))


def _split_numbered(text: str) -> list[tuple[int, int]]:
    markers = list(_NUMBERED_MARKER.finditer(text))
    if not markers:
        return [(0, len(text))]
    spans = []
    if text[: markers[0].start()].strip():
        spans.append((0, markers[0].start()))
    for m, nxt in zip(markers, markers[1:] + [None]):
        end = nxt.start() if nxt is not None else len(text)
        spans.append((m.end(), end))
    return spans


def _split_sentences(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    in_math = False
    n = len(text)
    for i, ch in enumerate(text):
        if ch == "$":
            in_math = not in_math
        elif ch in ".?!" and not in_math and _is_sentence_break(text, i):
            spans.append((start, i + 1))
            start = i + 1
    if start < n:
        spans.append((start, n))
    return spans


def _split_paragraphs(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for gap in _BLANK_LINE.finditer(text):
        spans.append((start, gap.start()))
        start = gap.end()
    spans.append((start, len(text)))
    return spans


def _is_sentence_break(text: str, i: int) -> bool:
    # Terminal punctuation at i; a break needs whitespace then uppercase/digit.
    j = i + 1
    n = len(text)
    if j >= n or not text[j].isspace():
        return False
    while j < n and text[j].isspace():
        j += 1
    if j >= n or not (text[j].isupper() or text[j].isdigit()):
        return False
    if text[i] == ".":
        tail = text[: i + 1].rstrip()
        token = tail.split()[-1].lower() if tail.split() else ""
        for abbr in _ABBREVIATIONS:
            if token.endswith(abbr):
                return False
    return True


def _strip_spans(text: str, spans) -> list[tuple[int, int]]:
    stripped = []
    for a, b in spans:
        chunk = text[a:b]
        if not chunk.strip():
            continue
        lead = len(chunk) - len(chunk.lstrip())
        trail = len(chunk) - len(chunk.rstrip())
        stripped.append((a + lead, b - trail))
    return stripped


def _merge_short(spans, min_chars: int) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for a, b in spans:
        if merged and b - a < min_chars:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return merged
