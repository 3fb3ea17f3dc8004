"""Batch operations over a corpus: extraction, sweeps, transfer, geometry,
ablations, and plot-data emission.

Traces are processed by a bounded worker pool (oracle queries are the only
shared state and the oracle cache serializes itself); results are collected
in corpus order so reports are byte-identical across runs for deterministic
oracles and fixed seeds. Traces that fail their preconditions (full trace
not sufficient, remote failures, missing losses) are skipped and logged,
never silently dropped.
"""
from __future__ import annotations

import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    DistributionUnavailable,
    FullTraceInsufficient,
    LossUnavailable,
    MissingEmbeddings,
    MissingLabels,
    MissingMetadata,
    MissingReport,
    OracleUnavailable,
    RemoteError,
    TraceCoreError,
    TraceTooLong,
)
from ..extraction import (
    CoreResult,
    budget_matched_subset,
    deletion_count,
    deletion_ranking,
    exhaustive_minimum,
    greedy_backward,
    necessity_guided,
    random_deletion,
)
from ..geometry import (
    HashEmbedder,
    cosine_alignment,
    davies_bouldin,
    embed_steps,
    group_variance,
    knn_accuracy,
    linear_probe_accuracy,
    load_embeddings_jsonl,
    participation_ratio,
    silhouette,
    trace_embeddings,
)
from ..metrics import (
    NecessityProfile,
    compression,
    gini,
    necessity_profile,
    nmass_k,
    overcompleteness_certificate,
    sparse_necessity_certificate,
    topk_indices,
)
from ..oracle import Oracle, canonicalize_answer, query_subset
from ..sufficiency import SufficiencyCriterion
from ..trace import SegmentationRule, Subset, Trace
from .config import RunConfig, config_hash
from .corpus import OracleSet, build_oracle_set, load_corpus
from .reports import (
    ReportRow,
    aggregate_rows,
    mean_std,
    read_rows_jsonl,
    write_aggregate_csv,
    write_json_report,
    write_rows_jsonl,
    write_table_csv,
    write_timings_csv,
)

log = logging.getLogger("tracecore.harness")

_SKIPPABLE = (FullTraceInsufficient, RemoteError, OracleUnavailable,
              TraceTooLong, DistributionUnavailable, LossUnavailable)


@dataclass
class RunResult:
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


def _criterion(config: RunConfig) -> SufficiencyCriterion:
    return SufficiencyCriterion(
        kind=config.criterion.get("kind", "answer"),
        epsilon=float(config.criterion.get("epsilon", 0.0)),
    )


def _segmentation(config: RunConfig) -> SegmentationRule:
    return SegmentationRule(
        kind=config.segmentation.get("kind", "numbered"),
        merge_min_chars=int(config.segmentation.get("merge_min_chars", 20)),
    )


def _load(config: RunConfig, auth_token: str | None = None):
    traces = load_corpus(config.corpus, _segmentation(config))
    oracle_set = build_oracle_set(config.oracle, auth_token=auth_token)
    return traces, oracle_set, _criterion(config)


def _map_traces(config: RunConfig, fn, traces):
    """Apply fn to each trace concurrently, preserving corpus order."""
    workers = max(1, int(config.parallelism))
    if workers == 1 or len(traces) <= 1:
        return [fn(t) for t in traces]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, traces))


def _answers_match(oracle: Oracle, trace: Trace, subset: Subset,
                   reference: str | None = None) -> bool:
    answer = query_subset(oracle, trace, subset).answer
    reference = trace.full_answer if reference is None else reference
    return canonicalize_answer(answer) == canonicalize_answer(reference)


def _extract(trace: Trace, oracle: Oracle, criterion: SufficiencyCriterion,
             method: str, params: dict,
             profile: NecessityProfile | None) -> CoreResult:
    if method == "greedy":
        return greedy_backward(trace, oracle, criterion)
    if method == "necessity_guided":
        return necessity_guided(
            trace, oracle, criterion, profile,
            blind=bool(params.get("blind", False)),
            removal_rate=params.get("removal_rate"),
        )
    if method == "random":
        return random_deletion(
            trace, oracle, criterion,
            removal_rate=float(params.get("removal_rate", 0.5)),
            seed=int(params.get("seed", 0)),
        )
    if method == "exhaustive":
        return exhaustive_minimum(
            trace, oracle, criterion, max_T=int(params.get("max_T", 14)))
    raise ValueError(f"unknown extraction method {method!r}")


def _profile_or_none(trace: Trace, oracle: Oracle) -> NecessityProfile | None:
    try:
        return necessity_profile(trace, oracle)
    except LossUnavailable:
        return None


def _row_from_result(trace: Trace, oracle: Oracle, criterion: SufficiencyCriterion,
                     result: CoreResult, profile: NecessityProfile | None,
                     runtime_s: float) -> ReportRow:
    cr, rm = compression(result.core)
    response = query_subset(oracle, trace, result.core)
    retained = canonicalize_answer(response.answer) == canonicalize_answer(trace.full_answer)

    certificates = []
    if result.deleted_indices and result.sufficient:
        record = overcompleteness_certificate(
            trace, oracle, criterion, result.deleted_indices)
        if record is not None:
            certificates.append(record.to_dict())
    if profile is not None and not profile.degenerate:
        top3 = topk_indices(profile.weights, 3)
        inside = sum(profile.weights[t] for t in top3)
        record = sparse_necessity_certificate(
            profile, top3, min(1.0, max(0.0, 1.0 - inside)))
        if record is not None:
            certificates.append(record.to_dict())

    degenerate = profile.degenerate if profile is not None else None
    usable = profile is not None and not profile.degenerate
    return ReportRow(
        trace_id=trace.id,
        method=result.method,
        variant=result.variant,
        trace_len=len(trace),
        core_len=len(result.core),
        cr=cr,
        rm=rm,
        retained_answer=response.answer,
        retention=retained,
        checks=result.sufficiency_checks,
        irreducible=result.irreducible,
        sufficient=result.sufficient,
        core_indices=list(result.core.indices),
        deleted_indices=list(result.deleted_indices),
        nmass1=nmass_k(profile, 1) if usable else (0.0 if degenerate else None),
        nmass3=nmass_k(profile, 3) if usable else (0.0 if degenerate else None),
        nmass5=nmass_k(profile, 5) if usable else (0.0 if degenerate else None),
        gini=gini(profile) if usable else None,
        degenerate_profile=degenerate,
        necessity_weights=list(profile.weights) if profile is not None else None,
        certificates=certificates,
        seed=result.seed,
        runtime_s=runtime_s,
    )


def run_extract(config: RunConfig, auth_token: str | None = None) -> RunResult:
    """Extract a core per trace and report per-trace rows plus aggregates."""
    traces, oracle_set, criterion = _load(config, auth_token)
    method = config.method
    params = dict(config.method_params)
    params.setdefault("seed", config.seed)

    def work(trace: Trace):
        start = time.perf_counter()
        try:
            oracle = oracle_set.for_trace(trace.id)
            profile = _profile_or_none(trace, oracle)
            result = _extract(trace, oracle, criterion, method, params, profile)
            row = _row_from_result(trace, oracle, criterion, result, profile,
                                   time.perf_counter() - start)
            return row, None
        except _SKIPPABLE as exc:
            return None, f"{type(exc).__name__}: {exc}"

    rows: list[ReportRow] = []
    skipped: list[tuple[str, str]] = []
    for trace, (row, reason) in zip(traces, _map_traces(config, work, traces)):
        if row is not None:
            rows.append(row)
        else:
            skipped.append((trace.id, reason))
            log.warning("skipping trace %s: %s", trace.id, reason)

    aggregates = aggregate_rows(rows) if rows else {"n": 0}
    aggregates["skipped"] = len(skipped)

    out = Path(config.out_dir)
    cfg_hash = config_hash(config)
    write_rows_jsonl(rows, out / "rows.jsonl", cfg_hash)
    write_aggregate_csv(aggregates, out / "aggregate.csv", cfg_hash)
    write_timings_csv([(r.trace_id, r.runtime_s) for r in rows],
                      out / "timings.csv")
    config.save(out / "config.json")
    outputs = [str(out / n) for n in ("rows.jsonl", "aggregate.csv",
                                      "timings.csv", "config.json")]
    return RunResult(rows=rows, aggregates=aggregates, skipped=skipped,
                     outputs=outputs)


def run_necessity(config: RunConfig, auth_token: str | None = None) -> RunResult:
    """Per-trace necessity profiles with concentration aggregates."""
    traces, oracle_set, _ = _load(config, auth_token)

    def work(trace: Trace):
        try:
            oracle = oracle_set.for_trace(trace.id)
            profile = necessity_profile(trace, oracle)
        except _SKIPPABLE as exc:
            return None, f"{type(exc).__name__}: {exc}"
        usable = not profile.degenerate
        row = {
            "trace_id": trace.id,
            "trace_len": len(trace),
            "deltas": list(profile.deltas),
            "weights": list(profile.weights),
            "degenerate": profile.degenerate,
            "nmass1": nmass_k(profile, 1) if usable else 0.0,
            "nmass3": nmass_k(profile, 3) if usable else 0.0,
            "nmass5": nmass_k(profile, 5) if usable else 0.0,
            "gini": gini(profile) if usable else None,
        }
        return row, None

    rows, skipped = [], []
    for trace, (row, reason) in zip(traces, _map_traces(config, work, traces)):
        if row is not None:
            rows.append(row)
        else:
            skipped.append((trace.id, reason))
            log.warning("skipping trace %s: %s", trace.id, reason)

    usable_rows = [r for r in rows if not r["degenerate"]]
    aggregates = {"n": len(rows), "degenerate_profiles": len(rows) - len(usable_rows),
                  "skipped": len(skipped)}
    for name in ("nmass1", "nmass3", "nmass5", "gini"):
        mean, std = mean_std([r[name] for r in usable_rows if r[name] is not None])
        aggregates[f"{name}_mean"] = mean
        aggregates[f"{name}_std"] = std

    out = Path(config.out_dir)
    cfg_hash = config_hash(config)
    write_rows_jsonl(rows, out / "necessity.jsonl", cfg_hash)
    write_aggregate_csv(aggregates, out / "necessity_aggregate.csv", cfg_hash)
    outputs = [str(out / "necessity.jsonl"), str(out / "necessity_aggregate.csv")]
    return RunResult(rows=rows, aggregates=aggregates, skipped=skipped,
                     outputs=outputs)


SWEEP_METHODS = ("greedy_path", "necessity_blind", "random")


def run_budget_sweep(config: RunConfig, auth_token: str | None = None) -> RunResult:
    """Answer retention at matched removal budgets for the three methods.

    greedy_path walks the recorded greedy deletion path to the nearest
    budget point and never forces sufficiency-violating deletions;
    necessity_blind and random delete exactly floor(budget * T) steps
    unconditionally, random averaged over the configured seeds.
    """
    traces, oracle_set, criterion = _load(config, auth_token)
    budgets = [float(b) for b in config.budgets]

    def work(trace: Trace):
        try:
            oracle = oracle_set.for_trace(trace.id)
            greedy = greedy_backward(trace, oracle, criterion)
            profile = _profile_or_none(trace, oracle)
            ranking = deletion_ranking(trace, oracle, profile)
        except _SKIPPABLE as exc:
            return None, f"{type(exc).__name__}: {exc}"

        T = len(trace)
        per_budget = {}
        for budget in budgets:
            n_delete = deletion_count(budget, T)
            matched = budget_matched_subset(greedy, trace, budget)
            greedy_hit = _answers_match(oracle, trace, matched)

            blind = Subset(tuple(sorted(set(range(T)) - set(ranking[:n_delete]))), T)
            blind_hit = _answers_match(oracle, trace, blind)

            random_hits = []
            for seed in config.random_seeds:
                rng = random.Random(f"{config.seed}:{trace.id}:{seed}:{budget}")
                dropped = set(rng.sample(range(T), n_delete))
                subset = Subset(tuple(t for t in range(T) if t not in dropped), T)
                random_hits.append(1.0 if _answers_match(oracle, trace, subset) else 0.0)

            per_budget[budget] = {
                "greedy_path": 1.0 if greedy_hit else 0.0,
                "necessity_blind": 1.0 if blind_hit else 0.0,
                "random": sum(random_hits) / len(random_hits),
            }
        return per_budget, None

    collected: dict[tuple[float, str], list[float]] = {}
    skipped = []
    for trace, (per_budget, reason) in zip(traces, _map_traces(config, work, traces)):
        if per_budget is None:
            skipped.append((trace.id, reason))
            log.warning("skipping trace %s: %s", trace.id, reason)
            continue
        for budget, by_method in per_budget.items():
            for method, value in by_method.items():
                collected.setdefault((budget, method), []).append(value)

    records = []
    rows = []
    for budget in budgets:
        for method in SWEEP_METHODS:
            values = collected.get((budget, method), [])
            mean, std = mean_std(values)
            records.append((budget, method, mean, std, len(values)))
            rows.append({"budget": budget, "method": method,
                         "retention_mean": mean, "retention_std": std,
                         "n": len(values)})

    out = Path(config.out_dir)
    cfg_hash = config_hash(config)
    write_table_csv(["budget", "method", "retention_mean", "retention_std", "n"],
                    records, out / "sweep.csv", cfg_hash)
    return RunResult(rows=rows, aggregates={"skipped": len(skipped)},
                     skipped=skipped, outputs=[str(out / "sweep.csv")])


def run_transfer(config: RunConfig, auth_token: str | None = None) -> RunResult:
    """Cross-oracle transfer: cores extracted under each source oracle are
    scored for answer retention under every target oracle, against the
    target's own full-trace answer, plus a matched-length random baseline.
    """
    if len(config.oracles) < 2:
        raise ValueError("transfer needs at least two oracle configurations")
    traces = load_corpus(config.corpus, _segmentation(config))
    criterion = _criterion(config)
    sets = []
    for i, oracle_cfg in enumerate(config.oracles):
        label = oracle_cfg.get("label") or f"oracle{i}"
        spec = {k: v for k, v in oracle_cfg.items() if k != "label"}
        sets.append(build_oracle_set(spec, auth_token=auth_token, label=label))

    cores: dict[str, dict[str, Subset]] = {}
    skipped = []
    for source in sets:
        def work(trace: Trace, source: OracleSet = source):
            try:
                oracle = source.for_trace(trace.id)
                return greedy_backward(trace, oracle, criterion).core, None
            except _SKIPPABLE as exc:
                return None, f"{type(exc).__name__}: {exc}"

        per_source = {}
        for trace, (core, reason) in zip(traces, _map_traces(config, work, traces)):
            if core is not None:
                per_source[trace.id] = core
            else:
                skipped.append((f"{source.label}/{trace.id}", reason))
                log.warning("transfer source %s skipping %s: %s",
                            source.label, trace.id, reason)
        cores[source.label] = per_source

    def target_retention(subset_by_id, target: OracleSet) -> tuple[float, int]:
        hits, n = 0, 0
        for trace in traces:
            subset = subset_by_id.get(trace.id)
            if subset is None:
                continue
            oracle = target.for_trace(trace.id)
            reference = query_subset(oracle, trace, Subset.full(len(trace))).answer
            hits += int(_answers_match(oracle, trace, subset, reference=reference))
            n += 1
        return (hits / n if n else float("nan")), n

    records = []
    matrix = {}
    for source in sets:
        for target in sets:
            value, n = target_retention(cores[source.label], target)
            matrix[(source.label, target.label)] = value
            records.append((source.label, target.label, value, n))

    # matched-length random baseline, one row per target
    for target in sets:
        values = []
        for source in sets:
            per_source = cores[source.label]
            for trace in traces:
                core = per_source.get(trace.id)
                if core is None:
                    continue
                hits = []
                for k in config.random_seeds:
                    rng = random.Random(
                        f"{config.seed}:transfer:{source.label}:{trace.id}:{k}")
                    picked = tuple(sorted(rng.sample(range(len(trace)), len(core))))
                    subset = Subset(picked, len(trace))
                    value, _ = target_retention({trace.id: subset}, target)
                    hits.append(value)
                values.append(sum(hits) / len(hits))
        mean, _ = mean_std(values)
        records.append(("random_matched", target.label, mean, len(values)))

    diagonal = [matrix[(s.label, s.label)] for s in sets]
    off_diagonal = [matrix[(s.label, t.label)] for s in sets for t in sets
                    if s.label != t.label]
    random_rows = [r[2] for r in records if r[0] == "random_matched"]
    aggregates = {
        "diagonal_mean": mean_std(diagonal)[0],
        "off_diagonal_mean": mean_std(off_diagonal)[0],
        "random_matched_mean": mean_std(random_rows)[0],
        "skipped": len(skipped),
    }

    out = Path(config.out_dir)
    cfg_hash = config_hash(config)
    write_table_csv(["source", "target", "retention", "n"], records,
                    out / "transfer.csv", cfg_hash)
    write_json_report(aggregates, out / "transfer_summary.json", cfg_hash)
    rows = [{"source": s, "target": t, "retention": v, "n": n}
            for s, t, v, n in records]
    return RunResult(rows=rows, aggregates=aggregates, skipped=skipped,
                     outputs=[str(out / "transfer.csv"),
                              str(out / "transfer_summary.json")])


GEOMETRY_GROUPS = ("full", "core", "removed", "necessity_weighted")


def _resolve_embeddings(config: RunConfig, traces) -> dict[str, np.ndarray]:
    source = config.embeddings or {}
    kind = source.get("kind")
    if kind == "jsonl":
        table = load_embeddings_jsonl(source["path"])
        missing = [t.id for t in traces if t.id not in table]
        if missing:
            raise MissingEmbeddings(f"no embeddings for {len(missing)} traces, "
                                    f"first: {missing[:3]}")
        for trace in traces:
            if table[trace.id].shape[0] != len(trace):
                raise MissingEmbeddings(
                    f"trace {trace.id}: {table[trace.id].shape[0]} embedding rows "
                    f"for {len(trace)} steps")
        return {t.id: table[t.id] for t in traces}
    if kind == "hash":
        embedder = HashEmbedder(dim=int(source.get("dim", 64)))
        return {t.id: embed_steps(t, embedder) for t in traces}
    raise MissingEmbeddings("config.embeddings must select 'jsonl' or 'hash'")


def _resolve_cores(config: RunConfig, traces, oracle_set, criterion):
    """Core subsets and necessity profiles, reused from a rows file when
    config.rows points at one, otherwise freshly extracted."""
    if config.rows:
        _, rows = read_rows_jsonl(config.rows)
        by_id = {r["trace_id"]: r for r in rows}
        cores, profiles, skipped = {}, {}, []
        for trace in traces:
            row = by_id.get(trace.id)
            if row is None:
                skipped.append((trace.id, "absent from rows file"))
                continue
            cores[trace.id] = Subset(tuple(row["core_indices"]), len(trace))
            weights = row.get("necessity_weights")
            if weights is not None:
                profiles[trace.id] = NecessityProfile(
                    deltas=tuple(weights), weights=tuple(weights),
                    degenerate=bool(row.get("degenerate_profile")),
                )
            else:
                profiles[trace.id] = None
        return cores, profiles, skipped

    cores, profiles, skipped = {}, {}, []
    params = dict(config.method_params)
    params.setdefault("seed", config.seed)

    def work(trace: Trace):
        try:
            oracle = oracle_set.for_trace(trace.id)
            profile = _profile_or_none(trace, oracle)
            result = _extract(trace, oracle, criterion, config.method, params, profile)
            return (result.core, profile), None
        except _SKIPPABLE as exc:
            return None, f"{type(exc).__name__}: {exc}"

    for trace, (got, reason) in zip(traces, _map_traces(config, work, traces)):
        if got is None:
            skipped.append((trace.id, reason))
            log.warning("geometry skipping trace %s: %s", trace.id, reason)
        else:
            cores[trace.id], profiles[trace.id] = got
    return cores, profiles, skipped


def run_geometry(config: RunConfig, auth_token: str | None = None) -> RunResult:
    """Group metrics over full/core/removed/necessity-weighted embeddings.

    Variance is reported relative to the full-trace group; zero vectors
    from empty groups are excluded from every statistic and counted, and
    degenerate necessity profiles are excluded from cosine alignments.
    """
    traces = load_corpus(config.corpus, _segmentation(config))
    unlabeled = [t.id for t in traces if t.correct_label is None]
    if unlabeled:
        raise MissingLabels(f"{len(unlabeled)} traces lack correctness labels, "
                            f"first: {unlabeled[:3]}")
    embeddings = _resolve_embeddings(config, traces)
    oracle_set = build_oracle_set(config.oracle, auth_token=auth_token) \
        if config.oracle else None
    if not config.rows and oracle_set is None:
        raise OracleUnavailable("geometry needs either config.rows or an oracle")
    cores, profiles, skipped = _resolve_cores(config, traces, oracle_set,
                                              _criterion(config))

    per_trace = {}
    for trace in traces:
        if trace.id not in cores:
            continue
        per_trace[trace.id] = trace_embeddings(
            embeddings[trace.id], cores[trace.id], profiles[trace.id])

    usable = [t for t in traces if t.id in per_trace]
    labels = np.array([1 if t.correct_label else 0 for t in usable])

    def group_vectors(group: str):
        vectors, mask = [], []
        for trace in usable:
            te = per_trace[trace.id]
            if group == "core" and te.degenerate_core:
                mask.append(False)
                continue
            if group == "removed" and te.degenerate_removed:
                mask.append(False)
                continue
            mask.append(True)
            vectors.append(getattr(te, group))
        return np.array(vectors), np.array(mask, dtype=bool)

    report: dict = {"groups": {}, "excluded": {}}
    full_variance = None
    for group in GEOMETRY_GROUPS:
        vectors, mask = group_vectors(group)
        group_labels = labels[mask]
        entry: dict = {"n": int(mask.sum()),
                       "excluded_degenerate": int((~mask).sum())}
        if len(vectors) == 0:
            report["groups"][group] = entry
            continue
        entry["variance"] = group_variance(vectors)
        if group == "full":
            full_variance = entry["variance"]
        entry["variance_relative"] = (
            entry["variance"] / full_variance
            if full_variance not in (None, 0.0) else None)
        for name, fn in [
            ("probe", lambda: linear_probe_accuracy(vectors, group_labels,
                                                    split_seed=config.seed)),
            ("knn", lambda: knn_accuracy(vectors, group_labels,
                                         split_seed=config.seed)),
            ("silhouette", lambda: silhouette(vectors, group_labels)),
            ("davies_bouldin", lambda: davies_bouldin(vectors, group_labels)),
            ("participation_ratio", lambda: participation_ratio(vectors)),
        ]:
            try:
                entry[name] = fn()
            except TraceCoreError as exc:
                entry[name] = None
                entry.setdefault("degenerate_metrics", {})[name] = type(exc).__name__
        report["groups"][group] = entry

    # cosine alignment of the necessity-weighted view against core/removed
    cos = {"necessity_vs_core": [], "full_vs_core": [],
           "necessity_vs_removed": [], "full_vs_removed": []}
    excluded = {"degenerate_necessity": 0, "empty_core": 0, "empty_removed": 0}
    for trace in usable:
        te = per_trace[trace.id]
        if te.degenerate_necessity:
            excluded["degenerate_necessity"] += 1
            continue
        if not te.degenerate_core and np.linalg.norm(te.core) > 0:
            cos["necessity_vs_core"].append(cosine_alignment(te.necessity_weighted, te.core))
            cos["full_vs_core"].append(cosine_alignment(te.full, te.core))
        else:
            excluded["empty_core"] += 1
        if not te.degenerate_removed and np.linalg.norm(te.removed) > 0:
            cos["necessity_vs_removed"].append(
                cosine_alignment(te.necessity_weighted, te.removed))
            cos["full_vs_removed"].append(cosine_alignment(te.full, te.removed))
        else:
            excluded["empty_removed"] += 1

    cosine_summary = {}
    for name, values in cos.items():
        mean, std = mean_std(values)
        cosine_summary[name] = {"mean": mean, "std": std, "n": len(values)}
    report["cosine"] = cosine_summary
    report["excluded"] = excluded

    def _ok(a, b, comparison):
        if a is None or b is None:
            return None
        return comparison(a, b)

    groups = report["groups"]
    report["predictions"] = {
        "core_alignment": _ok(cosine_summary["necessity_vs_core"]["mean"],
                              cosine_summary["full_vs_core"]["mean"],
                              lambda a, b: a > b),
        "removed_separation": _ok(cosine_summary["necessity_vs_removed"]["mean"],
                                  cosine_summary["full_vs_removed"]["mean"],
                                  lambda a, b: a < b),
        "correctness_signal": _ok(groups.get("core", {}).get("probe"),
                                  groups.get("full", {}).get("probe"),
                                  lambda a, b: a >= b),
    }
    report["skipped"] = [list(s) for s in skipped]

    out = Path(config.out_dir)
    cfg_hash = config_hash(config)
    write_json_report(report, out / "geometry.json", cfg_hash)
    flat = []
    for group, entry in report["groups"].items():
        for metric in ("probe", "knn", "silhouette", "davies_bouldin",
                       "participation_ratio", "variance", "variance_relative"):
            value = entry.get(metric)
            flat.append((group, metric,
                         "" if value is None else value, entry["n"]))
    write_table_csv(["group", "metric", "value", "n"], flat,
                    out / "geometry.csv", cfg_hash)
    return RunResult(rows=flat, aggregates=report, skipped=skipped,
                     outputs=[str(out / "geometry.json"), str(out / "geometry.csv")])


ABLATION_AXES = ("criterion_epsilon", "segmentation", "difficulty_tag")


def _extract_stats(config: RunConfig, traces, oracle_set,
                   criterion: SufficiencyCriterion) -> tuple[dict, list]:
    """Greedy extraction over traces, reduced to aggregate stats."""
    def work(trace: Trace):
        try:
            oracle = oracle_set.for_trace(trace.id)
            result = greedy_backward(trace, oracle, criterion)
            cr, rm = compression(result.core)
            retained = _answers_match(oracle, trace, result.core)
            profile = _profile_or_none(trace, oracle)
            top3 = (nmass_k(profile, 3)
                    if profile is not None and not profile.degenerate else None)
            return {"cr": cr, "rm": rm, "retention": 1.0 if retained else 0.0,
                    "trace_len": len(trace), "top3": top3}, None
        except _SKIPPABLE as exc:
            return None, f"{type(exc).__name__}: {exc}"

    stats, skipped = [], []
    for trace, (entry, reason) in zip(traces, _map_traces(config, work, traces)):
        if entry is None:
            skipped.append((trace.id, reason))
        else:
            stats.append(entry)

    def agg(name):
        values = [s[name] for s in stats if s[name] is not None]
        return mean_std(values)[0] if values else float("nan")

    return ({"n": len(stats), "cr": agg("cr"), "rm": agg("rm"),
             "retention": agg("retention"), "mean_len": agg("trace_len"),
             "top3": agg("top3")}, skipped)


def run_ablation(config: RunConfig, axis: str,
                 auth_token: str | None = None) -> RunResult:
    """Re-run extraction across one sensitivity axis and report strata."""
    if axis not in ABLATION_AXES:
        raise ValueError(f"axis must be one of {ABLATION_AXES}")
    traces = load_corpus(config.corpus, _segmentation(config))
    oracle_set = build_oracle_set(config.oracle, auth_token=auth_token)

    records = []
    skipped: list = []
    direction_ok = None

    if axis == "criterion_epsilon":
        epsilons = sorted(float(e) for e in config.ablation.get("epsilons", [0.05, 0.1]))
        # least strict first: answer mode, then distribution with shrinking eps
        settings: list[tuple[str, SufficiencyCriterion]] = [
            ("answer", SufficiencyCriterion("answer"))]
        for eps in sorted(epsilons, reverse=True):
            settings.append((f"distribution_eps={eps:g}",
                             SufficiencyCriterion("distribution", epsilon=eps)))
        crs = []
        for name, criterion in settings:
            stats, skip = _extract_stats(config, traces, oracle_set, criterion)
            skipped.extend(skip)
            records.append((name, stats["mean_len"], stats["cr"], stats["rm"],
                            stats["retention"], stats["n"]))
            crs.append(stats["cr"])
        direction_ok = all(b >= a - 1e-9 for a, b in zip(crs, crs[1:]))

    elif axis == "segmentation":
        missing = [t.id for t in traces if "raw_trace" not in t.metadata]
        if missing:
            raise MissingMetadata(
                f"{len(missing)} traces lack raw_trace text, first: {missing[:3]}")
        criterion = _criterion(config)
        crs = []
        # finest first so the direction check reads coarse >= fine
        for kind in ("sentence", "numbered", "paragraph"):
            rule = SegmentationRule(kind=kind,
                                    merge_min_chars=int(
                                        config.segmentation.get("merge_min_chars", 20)))
            rebuilt = []
            for trace in traces:
                from ..trace import segment as _segment
                steps = _segment(trace.metadata["raw_trace"], rule)
                rebuilt.append(Trace.from_texts(
                    trace.id, trace.input, [s.text for s in steps],
                    trace.full_answer, trace.correct_label, dict(trace.metadata)))
            stats, skip = _extract_stats(config, rebuilt, oracle_set, criterion)
            skipped.extend(skip)
            records.append((kind, stats["mean_len"], stats["cr"], stats["rm"],
                            stats["retention"], stats["n"]))
            crs.append(stats["cr"])
        direction_ok = all(b >= a - 1e-9 for a, b in zip(crs, crs[1:]))

    else:  # difficulty_tag
        missing = [t.id for t in traces if "difficulty" not in t.metadata]
        if missing:
            raise MissingMetadata(
                f"{len(missing)} traces lack difficulty tags, first: {missing[:3]}")
        criterion = _criterion(config)
        strata = sorted({t.metadata["difficulty"] for t in traces})
        for tag in strata:
            subset = [t for t in traces if t.metadata["difficulty"] == tag]
            stats, skip = _extract_stats(config, subset, oracle_set, criterion)
            skipped.extend(skip)
            records.append((tag, stats["mean_len"], stats["cr"], stats["rm"],
                            stats["retention"], stats["n"]))

    out = Path(config.out_dir)
    cfg_hash = config_hash(config)
    path = out / f"ablation_{axis}.csv"
    write_table_csv(["setting", "mean_len", "cr", "rm", "retention", "n"],
                    records, path, cfg_hash)
    aggregates = {"axis": axis, "direction_ok": direction_ok,
                  "skipped": len(skipped)}
    write_json_report(aggregates, out / f"ablation_{axis}_summary.json", cfg_hash)
    rows = [dict(zip(("setting", "mean_len", "cr", "rm", "retention", "n"), r))
            for r in records]
    return RunResult(rows=rows, aggregates=aggregates, skipped=skipped,
                     outputs=[str(path), str(out / f"ablation_{axis}_summary.json")])


HISTOGRAM_BIN_WIDTH = 0.05


def emit_plot_data(config: RunConfig) -> RunResult:
    """Turn report files in out_dir into plot-ready CSV bundles."""
    out = Path(config.out_dir)
    plots = out / "plots"
    cfg_hash = config_hash(config)
    emitted = []

    rows_path = out / "rows.jsonl"
    if rows_path.exists():
        _, rows = read_rows_jsonl(rows_path)
        edges = np.round(np.arange(0.0, 1.0 + HISTOGRAM_BIN_WIDTH,
                                   HISTOGRAM_BIN_WIDTH), 10)
        counts, _ = np.histogram([r["rm"] for r in rows], bins=edges)
        write_table_csv(
            ["bin_left", "bin_right", "count"],
            [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
             for i in range(len(counts))],
            plots / "redundancy_histogram.csv", cfg_hash)
        emitted.append(str(plots / "redundancy_histogram.csv"))

        points = [(r["trace_id"], r["trace_len"], r["core_len"]) for r in rows]
        write_table_csv(["trace_id", "full_len", "core_len"], points,
                        plots / "core_vs_full.csv", cfg_hash)
        emitted.append(str(plots / "core_vs_full.csv"))
        fit_records = []
        lengths = np.array([r["trace_len"] for r in rows], dtype=float)
        cores = np.array([r["core_len"] for r in rows], dtype=float)
        if len(set(lengths.tolist())) >= 2:
            slope, intercept = np.polyfit(lengths, cores, 1)
            fit_records.append(("least_squares", float(slope), float(intercept)))
        fit_records.append(("identity_reference", 1.0, 0.0))
        write_table_csv(["line", "slope", "intercept"], fit_records,
                        plots / "core_vs_full_fit.csv", cfg_hash)
        emitted.append(str(plots / "core_vs_full_fit.csv"))

    necessity_path = out / "necessity.jsonl"
    if necessity_path.exists():
        _, rows = read_rows_jsonl(necessity_path)
        usable = [r for r in rows if not r["degenerate"]]
        if usable:
            max_T = max(r["trace_len"] for r in usable)
            records = []
            for k in range(1, max_T + 1):
                observed = []
                uniform = []
                for r in usable:
                    weights = r["weights"]
                    top = sorted(range(len(weights)),
                                 key=lambda t: (-weights[t], t))[:k]
                    observed.append(sum(weights[t] for t in top))
                    uniform.append(min(k / r["trace_len"], 1.0))
                records.append((k, float(np.mean(observed)), float(np.mean(uniform))))
            write_table_csv(["k", "observed_mean", "uniform_baseline"], records,
                            plots / "cumulative_topk.csv", cfg_hash)
            emitted.append(str(plots / "cumulative_topk.csv"))

    sweep_path = out / "sweep.csv"
    if sweep_path.exists():
        import csv as _csv
        with open(sweep_path, encoding="utf-8") as fh:
            body = [line for line in fh if not line.startswith("#")]
        reader = _csv.reader(body)
        header = next(reader)
        write_table_csv(header, list(reader),
                        plots / "retention_compression.csv", cfg_hash)
        emitted.append(str(plots / "retention_compression.csv"))

    geometry_path = out / "geometry.json"
    if geometry_path.exists():
        payload = json.loads(geometry_path.read_text(encoding="utf-8"))
        records = []
        for group, entry in payload.get("groups", {}).items():
            for metric in ("probe", "participation_ratio", "variance_relative"):
                value = entry.get(metric)
                if value is not None:
                    records.append((group, metric, float(value)))
        write_table_csv(["group", "metric", "value"], records,
                        plots / "geometry_bars.csv", cfg_hash)
        emitted.append(str(plots / "geometry_bars.csv"))

    if not emitted:
        raise MissingReport(f"no report files found under {out}")
    return RunResult(outputs=emitted)
