"""Command-line entry point.

Subcommands: synth | extract | sweep | necessity | geometry | transfer |
ablate | plot-data. Runs are driven by a JSON config (--config); --out,
--seed, and --oracle-url override the corresponding config fields, and the
oracle auth token is read from the TRACECORE_ORACLE_TOKEN environment
variable.

Exit codes: 0 on success, 1 when some traces were skipped (details in the
log), 2 on fatal configuration or parse errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..errors import TraceCoreError
from ..geometry import save_embeddings_jsonl
from ..synth import CorpusSpec, generate_corpus, render_raw_trace
from ..trace import Trace
from .config import RunConfig
from .corpus import save_corpus, save_planted_oracles
from .runs import (
    emit_plot_data,
    run_ablation,
    run_budget_sweep,
    run_extract,
    run_geometry,
    run_necessity,
    run_transfer,
)

TOKEN_ENV_VAR = "TRACECORE_ORACLE_TOKEN"

log = logging.getLogger("tracecore.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracecore",
        description="Minimal sufficient core extraction and trace analytics.",
    )
    parser.add_argument("--config", help="path to a run config JSON")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="base seed (overrides config)")
    parser.add_argument("--oracle-url",
                        help="use an HTTP oracle at this URL (overrides config)")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a planted corpus bundle")
    synth.add_argument("--n", type=int, default=100)
    synth.add_argument("--trace-len", type=int, nargs="+", default=[8])
    synth.add_argument("--key-fraction", type=float, nargs="+", default=[0.5])
    synth.add_argument("--rule", nargs="+", default=["all_of_keys_required"])
    synth.add_argument("--threshold-fraction", type=float, default=0.5)
    synth.add_argument("--context-sensitivity", type=float, default=0.0)
    synth.add_argument("--embed-dim", type=int, default=16)
    synth.add_argument("--raw", action="store_true",
                       help="write raw trace text instead of step lists")

    sub.add_parser("extract", help="extract cores and report CR/RM/retention")
    sweep = sub.add_parser("sweep", help="retention at matched removal budgets")
    sweep.add_argument("--budgets", type=float, nargs="+")
    sub.add_parser("necessity", help="leave-one-out necessity profiles")
    sub.add_parser("geometry", help="representation geometry report")
    sub.add_parser("transfer", help="cross-oracle transfer matrix")
    ablate = sub.add_parser("ablate", help="sensitivity re-runs along one axis")
    ablate.add_argument("--axis", required=True,
                        choices=["criterion_epsilon", "segmentation", "difficulty_tag"])
    sub.add_parser("plot-data", help="emit plot-ready CSV bundles from reports")

    return parser


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    else:
        config = RunConfig()
    if args.out:
        config.out_dir = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.oracle_url:
        config.oracle = {"kind": "http", "params": {"url": args.oracle_url}}
    return config


def _cmd_synth(args, config: RunConfig) -> int:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = generate_corpus(CorpusSpec(
        n=args.n,
        trace_lens=tuple(args.trace_len),
        key_fractions=tuple(args.key_fraction),
        rules=tuple(args.rule),
        threshold_fraction=args.threshold_fraction,
        context_sensitivity=args.context_sensitivity,
        seed=config.seed,
        embed_dim=args.embed_dim,
    ))

    traces = corpus.traces
    if args.raw:
        traces = []
        for trace in corpus.traces:
            metadata = dict(trace.metadata)
            metadata["raw_trace"] = render_raw_trace(trace)
            traces.append(Trace(
                id=trace.id, input=trace.input, steps=trace.steps,
                full_answer=trace.full_answer, correct_label=trace.correct_label,
                metadata=metadata))

    save_corpus(traces, out / "corpus.jsonl", keep_raw=args.raw)
    save_planted_oracles(corpus, out / "oracles.json")
    save_embeddings_jsonl(corpus.embeddings, out / "embeddings.jsonl")

    run_config = RunConfig(
        corpus=str(out / "corpus.jsonl"),
        oracle={"kind": "planted_file", "path": str(out / "oracles.json")},
        embeddings={"kind": "jsonl", "path": str(out / "embeddings.jsonl")},
        seed=config.seed,
        out_dir=str(out / "reports"),
    )
    run_config.save(out / "config.json")
    print(f"wrote corpus bundle for {args.n} traces under {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        config = _load_config(args)
    except (TraceCoreError, OSError, ValueError) as exc:
        log.error("config error: %s", exc)
        return 2

    token = os.environ.get(TOKEN_ENV_VAR)
    try:
        if args.command == "synth":
            return _cmd_synth(args, config)
        if args.command == "extract":
            result = run_extract(config, auth_token=token)
        elif args.command == "sweep":
            if args.budgets:
                config.budgets = list(args.budgets)
            result = run_budget_sweep(config, auth_token=token)
        elif args.command == "necessity":
            result = run_necessity(config, auth_token=token)
        elif args.command == "geometry":
            result = run_geometry(config, auth_token=token)
        elif args.command == "transfer":
            result = run_transfer(config, auth_token=token)
        elif args.command == "ablate":
            result = run_ablation(config, args.axis, auth_token=token)
        elif args.command == "plot-data":
            result = emit_plot_data(config)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command}")
    except (TraceCoreError, ValueError, OSError) as exc:
        log.error("fatal: %s", exc)
        return 2

    for path in result.outputs:
        print(path)
    if result.skipped:
        log.warning("%d traces skipped", len(result.skipped))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
