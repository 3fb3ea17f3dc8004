"""Corpus file I/O and oracle-set resolution.

Trace corpora are JSONL with one object per trace:

    {"id": str, "input": str, "steps": [str]|null, "raw_trace": str|null,
     "full_answer": str, "correct_label": bool|null, "metadata": object}

Exactly one of steps / raw_trace must be present; raw_trace rows are
segmented with the configured rule at load time (the raw text is kept in
metadata so segmentation ablations can re-cut it).
"""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import CorpusParseError, EmptyCorpus, OracleUnavailable
from ..oracle import Oracle, OracleSpec, build_oracle
from ..synth import Corpus, PlantedRuleOracle
from ..trace import SegmentationRule, Trace, segment

_REQUIRED = ("id", "input", "full_answer")


def load_corpus(path, rule: SegmentationRule | None = None) -> list[Trace]:
    rule = rule or SegmentationRule()
    traces: list[Trace] = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(str(exc), line=line_no) from exc
            try:
                traces.append(_parse_row(row, rule))
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusParseError(str(exc), line=line_no) from exc
            if traces[-1].id in seen_ids:
                raise CorpusParseError(f"duplicate trace id {traces[-1].id!r}",
                                       line=line_no)
            seen_ids.add(traces[-1].id)
    if not traces:
        raise EmptyCorpus(f"{path} contains no traces")
    return traces


def _parse_row(row: dict, rule: SegmentationRule) -> Trace:
    for key in _REQUIRED:
        if not row.get(key):
            raise ValueError(f"missing required field {key!r}")
    steps = row.get("steps")
    raw = row.get("raw_trace")
    if (steps is None) == (raw is None):
        raise ValueError("exactly one of steps/raw_trace must be present")

    metadata = dict(row.get("metadata") or {})
    if raw is not None:
        texts = [s.text for s in segment(raw, rule)]
        metadata.setdefault("raw_trace", raw)
    else:
        texts = list(steps)

    return Trace.from_texts(
        id=str(row["id"]),
        input=str(row["input"]),
        texts=texts,
        full_answer=str(row["full_answer"]),
        correct_label=row.get("correct_label"),
        metadata=metadata,
    )


def save_corpus(traces, path, keep_raw: bool = False) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            metadata = {k: v for k, v in trace.metadata.items() if k != "raw_trace"}
            raw = trace.metadata.get("raw_trace") if keep_raw else None
            row = {
                "id": trace.id,
                "input": trace.input,
                "steps": None if raw is not None else list(trace.step_texts),
                "raw_trace": raw,
                "full_answer": trace.full_answer,
                "correct_label": trace.correct_label,
                "metadata": metadata,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")


class OracleSet:
    """Resolves the oracle to query for a given trace.

    Shared sets hold one oracle for the whole corpus; planted sets carry
    one rule oracle per trace id.
    """

    def __init__(self, label: str, shared: Oracle | None = None,
                 per_trace: dict[str, Oracle] | None = None):
        if (shared is None) == (per_trace is None):
            raise ValueError("exactly one of shared/per_trace required")
        self.label = label
        self._shared = shared
        self._per_trace = per_trace or {}

    def for_trace(self, trace_id: str) -> Oracle:
        if self._shared is not None:
            return self._shared
        try:
            return self._per_trace[trace_id]
        except KeyError:
            raise OracleUnavailable(f"no oracle for trace {trace_id!r}") from None


def build_oracle_set(oracle_config: dict, auth_token: str | None = None,
                     label: str | None = None) -> OracleSet:
    if not oracle_config:
        raise OracleUnavailable("run configuration carries no oracle")
    kind = oracle_config.get("kind")
    if kind == "planted_file":
        path = oracle_config["path"]
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        per_trace = {
            trace_id: PlantedRuleOracle.from_params(params)
            for trace_id, params in payload["traces"].items()
        }
        return OracleSet(label or f"planted:{path}", per_trace=per_trace)
    spec = OracleSpec.from_dict(oracle_config)
    return OracleSet(label or spec.kind, shared=build_oracle(spec, auth_token=auth_token))


def save_planted_oracles(corpus: Corpus, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "traces": {
            trace_id: oracle.to_oracle_spec().params
            for trace_id, oracle in corpus.oracles.items()
        }
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
