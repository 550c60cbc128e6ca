"""CSV rows and JSON summaries for experiment runs.

CSV files are UTF-8 with a header row; floats are written with ``repr``, the
shortest decimal that round-trips. The JSON summary follows ``SUMMARY_SCHEMA``.
Everything except ``runtime_seconds`` is a pure function of (config, seed,
version).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "orbitadv run summary",
    "type": "object",
    "required": ["experiment", "config_hash", "seed", "estimates", "bounds", "checks",
                 "runtime_seconds", "version"],
    "properties": {
        "experiment": {"type": "string"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
        "seed": {"type": "integer", "minimum": 0},
        "estimates": {"type": "object", "additionalProperties": {"type": ["number", "null"]}},
        "bounds": {"type": "object", "additionalProperties": {"type": ["number", "null"]}},
        "checks": {"type": "object", "additionalProperties": {"enum": ["pass", "fail"]}},
        "runtime_seconds": {"type": "number", "minimum": 0},
        "version": {"type": "string"},
    },
    "additionalProperties": False,
}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.header):
            raise ValueError(f"row has {len(values)} values, header has {len(self.header)}")
        self.rows.append(list(values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([format_value(v) for v in row])
        return buf.getvalue()


def _clean(mapping: dict) -> dict:
    # JSON has no nan/inf; store them as null
    out = {}
    for k, v in mapping.items():
        v = float(v) if v is not None else None
        out[k] = v if v is not None and math.isfinite(v) else None
    return out


@dataclass
class RunRecord:
    experiment: str
    config_text: str
    config_hash: str
    seed: int
    table: Table
    estimates: dict[str, float]
    bounds: dict[str, float]
    checks: dict[str, bool]
    runtime_seconds: float
    version: str

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        doc = {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "estimates": _clean(self.estimates),
            "bounds": _clean(self.bounds),
            "checks": {k: "pass" if v else "fail" for k, v in self.checks.items()},
            "runtime_seconds": float(self.runtime_seconds),
            "version": self.version,
        }
        jsonschema.validate(doc, SUMMARY_SCHEMA)
        return doc

    def write(self, out_dir) -> dict[str, Path]:
        """Write ``<kind>.csv``, ``<kind>.json`` and ``<kind>.config``; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "csv": out / f"{self.experiment}.csv",
            "json": out / f"{self.experiment}.json",
            "config": out / f"{self.experiment}.config",
        }
        paths["csv"].write_text(self.table.to_csv(), encoding="utf-8")
        paths["json"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
        paths["config"].write_text(self.config_text, encoding="utf-8")
        return paths


def load_summary(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    jsonschema.validate(doc, SUMMARY_SCHEMA)
    return doc
