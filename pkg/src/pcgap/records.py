"""Sweep record rows shared by the task modules and the harness.

One SweepRecord per (configuration, seed) task.  Records serialize to a
single JSON line; the harness appends them to JSONL files and mirrors the
metric fields into per-tier CSVs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["SweepRecord"]


@dataclass(frozen=True)
class SweepRecord:
    tier: str
    params: dict
    seed: int
    metrics: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def key(self) -> str:
        """Stable identity of the task, used for resume-skipping."""
        return json.dumps({"tier": self.tier, "params": self.params,
                           "seed": self.seed}, sort_keys=True)

    def to_json(self) -> str:
        return json.dumps({"tier": self.tier, "params": self.params,
                           "seed": self.seed, "metrics": self.metrics,
                           "status": self.status}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SweepRecord":
        obj = json.loads(line)
        return cls(tier=obj["tier"], params=obj["params"], seed=int(obj["seed"]),
                   metrics=obj.get("metrics", {}), status=obj.get("status", "ok"))
