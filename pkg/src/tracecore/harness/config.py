"""Run configuration: one serializable object drives every subcommand.

A persisted config re-runs to identical outputs for deterministic oracles;
every report file embeds the config hash so results stay traceable to the
exact settings that produced them.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_BUDGETS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
DEFAULT_RANDOM_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class RunConfig:
    """Everything a run needs, as plain serializable data.

    oracle describes either one shared oracle ({"kind": "http", ...}) or a
    per-trace planted set ({"kind": "planted_file", "path": ...}); oracles
    lists several of those for transfer runs. embeddings points at a step
    embedding source for geometry ({"kind": "jsonl", "path": ...} or
    {"kind": "hash", "dim": ...}).
    """

    corpus: str = ""
    oracle: dict = field(default_factory=dict)
    oracles: list = field(default_factory=list)
    criterion: dict = field(default_factory=lambda: {"kind": "answer", "epsilon": 0.0})
    method: str = "greedy"
    method_params: dict = field(default_factory=dict)
    segmentation: dict = field(default_factory=lambda: {"kind": "numbered",
                                                        "merge_min_chars": 20})
    embeddings: dict = field(default_factory=dict)
    budgets: list = field(default_factory=lambda: list(DEFAULT_BUDGETS))
    random_seeds: list = field(default_factory=lambda: list(DEFAULT_RANDOM_SEEDS))
    ablation: dict = field(default_factory=lambda: {"epsilons": [0.05, 0.1]})
    rows: str = ""
    out_dir: str = "runs/out"
    parallelism: int = 8
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return RunConfig(**data)

    @staticmethod
    def load(path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
