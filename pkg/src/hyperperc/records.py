"""Result records, their versioned schemas, and JSON/CSV writers.

A record is ``{schema, kind, config, outputs, provenance}``.  Everything that
varies between identical runs (timestamps, wall time, host) lives in
``provenance``; ``outputs`` is a pure function of ``config``, so re-running a
record's config echo must reproduce ``outputs`` exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from datetime import datetime, timezone
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np

from . import __version__
from .errors import PropertyViolation

SCHEMA_VERSION = "hyperperc.record/1"
CSV_SCHEMA_VERSION = "hyperperc.csv/1"

RECORD_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "config", "outputs", "provenance"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "kind": {"type": "string", "minLength": 1},
        "config": {"type": "object"},
        "outputs": {"type": "object"},
        "provenance": {
            "type": "object",
            "required": ["tool", "version", "timestamp", "wall_time_ms"],
            "properties": {
                "tool": {"const": "hyperperc"},
                "version": {"type": "string"},
                "timestamp": {"type": "string"},
                "wall_time_ms": {"type": "number", "minimum": 0},
            },
        },
    },
}

ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["quantity", "presentation", "radius", "p", "value", "std_error", "trials", "seed"],
    "properties": {
        "quantity": {"type": "string"},
        "presentation": {"type": "string"},
        "radius": {"type": "integer", "minimum": 0},
        "p": {"type": ["number", "null"]},
        "value": {"type": ["number", "null"]},
        "std_error": {"type": ["number", "null"], "minimum": 0},
        "trials": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["check", "verdict"],
    "properties": {"check": {"type": "string"}, "verdict": {"enum": ["pass", "fail"]}},
}

CSV_COLUMNS = {
    "estimate": ["p", "value", "std_error"],
    "chain": ["p", "chi", "chi_std_error", "pc_gap_chi", "iota", "iota_std_error", "triangle", "triangle_std_error"],
}


def jsonable(x: Any) -> Any:
    """Convert numpy scalars/arrays, tuples, sets and non-finite floats to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (set, frozenset)):
        return sorted(jsonable(v) for v in x)
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, np.generic):
        return jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(x, "numerator") and hasattr(x, "denominator") and not isinstance(x, (int, bool)):
        return float(x)
    return x


def estimate_outputs(est, **extra) -> dict:
    """Flatten an ``Estimate`` into the estimate schema, dropping wall time."""
    meta = {k: v for k, v in est.meta.items() if k != "wall_time_ms"}
    out = {
        "quantity": meta.pop("quantity", extra.pop("quantity", "estimate")),
        "presentation": meta.pop("presentation", extra.pop("presentation", "")),
        "radius": int(meta.pop("radius", extra.pop("radius", 0))),
        "p": meta.pop("p", extra.pop("p", None)),
        "value": est.value,
        "std_error": est.std_error,
        "trials": est.trials,
        "seed": est.seed,
    }
    out.update(extra)
    if meta:
        out["meta"] = meta
    return jsonable(out)


def make_record(kind: str, config: dict, outputs: dict, wall_time_ms: float) -> dict:
    rec = {
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "config": jsonable(config),
        "outputs": jsonable(outputs),
        "provenance": {
            "tool": "hyperperc",
            "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_time_ms": round(float(wall_time_ms), 3),
            "python": platform.python_version(),
        },
    }
    validate_record(rec)
    return rec


def validate_record(rec: dict) -> None:
    try:
        jsonschema.validate(rec, RECORD_SCHEMA)
        if rec["kind"] == "estimate":
            jsonschema.validate(rec["outputs"], ESTIMATE_SCHEMA)
        elif rec["kind"] == "report":
            jsonschema.validate(rec["outputs"], REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise PropertyViolation(f"record violates schema {SCHEMA_VERSION}: {exc.message}") from None


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def csv_text(columns: Sequence[str], rows: Iterable[dict], comment: str | None = None) -> str:
    """CSV with a leading ``# schema`` comment line and a fixed header."""
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA_VERSION}" + (f" {comment}" if comment else "") + "\n")
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_cell(r.get(k)) for k in columns})
    return buf.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(text: str, kind: str | None = None) -> list[dict]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {CSV_SCHEMA_VERSION}"):
        raise PropertyViolation(f"CSV lacks the {CSV_SCHEMA_VERSION} schema line")
    rows = list(csv.DictReader(lines[1:]))
    if kind is not None:
        header = lines[1].split(",") if len(lines) > 1 else []
        if header != CSV_COLUMNS[kind]:
            raise PropertyViolation(f"CSV header {header} does not match the {kind} schema {CSV_COLUMNS[kind]}")
    return rows


def record_csv(rec: dict) -> str:
    """Tabular view of a record: estimates become one row, sweeps keep their rows."""
    out = rec["outputs"]
    if "rows" in out and "columns" in out:
        return csv_text(out["columns"], out["rows"], comment=rec["kind"])
    if rec["kind"] == "estimate":
        return csv_text(CSV_COLUMNS["estimate"], [out], comment=out.get("quantity"))
    flat = {k: v for k, v in out.items() if not isinstance(v, (dict, list))}
    return csv_text(sorted(flat), [flat], comment=rec["kind"])


class Stopwatch:
    def __init__(self):
        self.t0 = time.perf_counter()

    @property
    def ms(self) -> float:
        return 1e3 * (time.perf_counter() - self.t0)
