"""Report rows and writers.

Each run emits one JSONL of per-trace rows plus one CSV aggregate; both
embed the config hash and artifact version. Wall-clock timings go to a
separate sidecar so the canonical report files stay byte-identical across
re-runs of the same config.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__


@dataclass
class ReportRow:
    """Per-trace extraction record."""

    trace_id: str
    method: str
    variant: str
    trace_len: int
    core_len: int
    cr: float
    rm: float
    retained_answer: str
    retention: bool
    checks: int
    irreducible: bool
    sufficient: bool
    core_indices: list[int]
    deleted_indices: list[int]
    nmass1: float | None = None
    nmass3: float | None = None
    nmass5: float | None = None
    gini: float | None = None
    degenerate_profile: bool | None = None
    necessity_weights: list[float] | None = None
    certificates: list[dict] = field(default_factory=list)
    seed: int | None = None
    runtime_s: float = 0.0

    def to_json_dict(self) -> dict:
        # runtime is volatile; it lives in the timings sidecar instead
        data = {k: v for k, v in self.__dict__.items() if k != "runtime_s"}
        return data


def _meta(cfg_hash: str) -> dict:
    return {"_meta": {"config_hash": cfg_hash, "version": __version__}}


def write_rows_jsonl(rows, path, cfg_hash: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_meta(cfg_hash), sort_keys=True) + "\n")
        for row in rows:
            payload = row.to_json_dict() if isinstance(row, ReportRow) else row
            fh.write(json.dumps(payload, sort_keys=True) + "\n")


def read_rows_jsonl(path) -> tuple[dict, list[dict]]:
    meta: dict = {}
    rows: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            payload = json.loads(line)
            if "_meta" in payload:
                meta = payload["_meta"]
            else:
                rows.append(payload)
    return meta, rows


def write_timings_csv(timings, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trace_id", "runtime_s"])
        for trace_id, runtime in timings:
            writer.writerow([trace_id, f"{runtime:.6f}"])


def mean_std(values) -> tuple[float, float]:
    values = [float(v) for v in values]
    if not values:
        return float("nan"), float("nan")
    mean = sum(values) / len(values)
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def aggregate_rows(rows: list[ReportRow]) -> dict:
    """Corpus aggregates, re-derivable from the row file."""
    def column(name):
        return [getattr(r, name) for r in rows]

    top3 = [r.nmass3 for r in rows if r.nmass3 is not None and not r.degenerate_profile]
    gini_vals = [r.gini for r in rows if r.gini is not None]
    aggregates = {
        "n": len(rows),
        "degenerate_profiles": sum(1 for r in rows if r.degenerate_profile),
    }
    for name, values in [
        ("full_len", column("trace_len")),
        ("core_len", column("core_len")),
        ("cr", column("cr")),
        ("rm", column("rm")),
        ("retention", [1.0 if r.retention else 0.0 for r in rows]),
        ("checks", column("checks")),
        ("top3_mass", top3),
        ("gini", gini_vals),
    ]:
        mean, std = mean_std(values)
        aggregates[f"{name}_mean"] = mean
        aggregates[f"{name}_std"] = std
    return aggregates


def write_aggregate_csv(aggregates: dict, path, cfg_hash: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash} version={__version__}\n")
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key in sorted(aggregates):
            value = aggregates[key]
            if isinstance(value, float):
                value = "nan" if math.isnan(value) else f"{value:.10g}"
            writer.writerow([key, value])


def write_table_csv(header, records, path, cfg_hash: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash} version={__version__}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for record in records:
            writer.writerow([
                f"{v:.10g}" if isinstance(v, float) else v for v in record
            ])


def write_json_report(payload: dict, path, cfg_hash: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    payload = dict(payload)
    payload["_meta"] = _meta(cfg_hash)["_meta"]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
