"""Batch orchestration: configuration, corpus I/O, runs, reports, CLI."""

from .config import RunConfig, config_hash
from .corpus import OracleSet, build_oracle_set, load_corpus, save_corpus
from .runs import (
    emit_plot_data,
    run_ablation,
    run_budget_sweep,
    run_extract,
    run_geometry,
    run_necessity,
    run_transfer,
)

__all__ = [
    "RunConfig", "config_hash",
    "OracleSet", "build_oracle_set", "load_corpus", "save_corpus",
    "emit_plot_data", "run_ablation", "run_budget_sweep", "run_extract",
    "run_geometry", "run_necessity", "run_transfer",
]
