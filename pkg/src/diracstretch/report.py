"""Report structures and their serializations.

Reports exist in two forms: human-readable text and a machine-readable JSON
tree. The JSON form is deterministic byte-for-byte for a fixed model file
and seed (sorted keys, plain Python scalars, no timestamps); a JSON schema
for it is published as REPORT_SCHEMA.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def plain(value):
    """Recursively convert numpy scalars/arrays into JSON-able values."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, float) and (value != value or value in (float("inf"), float("-inf"))):
        return repr(value)
    return value


@dataclass(frozen=True)
class TaskReport:
    name: str
    kind: str
    passed: bool
    data: dict
    text: tuple[str, ...]

    def tree(self) -> dict:
        return {"name": self.name, "kind": self.kind, "passed": self.passed,
                "data": plain(self.data)}


@dataclass(frozen=True)
class RunReport:
    model: str
    seed: int
    dimension: int
    grid_points: int
    tolerances: dict
    tasks: tuple[TaskReport, ...]

    @property
    def all_passed(self) -> bool:
        return all(t.passed for t in self.tasks)

    def tree(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "dimension": self.dimension,
            "grid_points": self.grid_points,
            "tolerances": plain(self.tolerances),
            "tasks": [t.tree() for t in self.tasks],
            "all_passed": self.all_passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.tree(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"model: {self.model}",
                 f"seed: {self.seed}  dimension: {self.dimension}  "
                 f"grid points: {self.grid_points}"]
        for t in self.tasks:
            lines.append("")
            lines.append(f"[{'PASS' if t.passed else 'FAIL'}] {t.name} ({t.kind})")
            lines.extend(f"    {ln}" for ln in t.text)
        lines.append("")
        lines.append(f"summary: {'all tasks passed' if self.all_passed else 'FAILURES present'}")
        return "\n".join(lines) + "\n"


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["model", "seed", "dimension", "grid_points", "tolerances",
                 "tasks", "all_passed"],
    "properties": {
        "model": {"type": "string"},
        "seed": {"type": "integer"},
        "dimension": {"type": "integer", "minimum": 1},
        "grid_points": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object",
            "required": ["rank_tolerance", "bracket_residual"],
            "properties": {
                "rank_tolerance": {"type": "number"},
                "bracket_residual": {"type": "number"},
            },
        },
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind", "passed", "data"],
                "properties": {
                    "name": {"type": "string"},
                    "kind": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "data": {"type": "object"},
                },
            },
        },
        "all_passed": {"type": "boolean"},
    },
}


def validate_report_tree(tree: dict) -> None:
    """Validate a machine-readable report against the published schema
    (requires jsonschema)."""
    import jsonschema

    jsonschema.validate(tree, REPORT_SCHEMA)
