"""CSV and JSON emission of sweep records."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import List

from causalcr.sweep import ExperimentConfig, SweepRecord

CSV_HEADER = ("snr_db", "method", "threshold", "ur", "ur_stderr", "ir", "ir_stderr",
              "eta_max", "n_idle", "n_active", "status")
SCHEMA_VERSION = 1

_FLOATS = ("snr_db", "threshold", "ur", "ur_stderr", "ir", "ir_stderr", "eta_max")
_INTS = ("n_idle", "n_active")


def _render(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name: str, text: str):
    if name in _FLOATS:
        return float(text) if text else None
    if name in _INTS:
        return int(text) if text else None
    return text


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([_render(getattr(r, name)) for name in CSV_HEADER])


def read_csv(path) -> List[SweepRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [SweepRecord(**{k: _parse(k, v) for k, v in row.items()}) for row in reader]


def write_json_summary(records, cfg: ExperimentConfig, path) -> None:
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "records": [{name: getattr(r, name) for name in CSV_HEADER} for r in records],
    }
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")


def emit_results(records, path, fmt: str = "csv", cfg: ExperimentConfig = None) -> None:
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    if fmt == "csv":
        write_csv(records, path)
    elif fmt == "json":
        if cfg is None:
            raise ValueError("the JSON summary needs the experiment config")
        write_json_summary(records, cfg, path)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
