"""Run reports and their on-disk metrics formats.

The per-round CSV is deterministic for a given config (timings live in a
separate file precisely because they are not). Every metrics file carries
a schema version and the fixed-point scale so results are reproducible
bit-for-bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

SCHEMA_VERSION = 1

CSV_COLUMNS = ("round", "party_id", "similarity", "included", "test_error", "accuracy", "threshold")


@dataclass
class RoundRecord:
    """Everything observable about one communication round."""

    round_index: int
    threshold: float | None
    scores: dict
    included: dict
    test_error: float
    accuracy: float
    global_params: np.ndarray | None = None


@dataclass
class RunReport:
    """Per-round records plus summary and similarity-phase timings."""

    mode: str
    records: list
    final_test_error: float
    final_accuracy: float
    phase_timings: dict
    config: dict
    stopped_reason: str = "max_rounds"
    schema_version: int = SCHEMA_VERSION
    server_state: bytes = b""

    @property
    def rounds_completed(self) -> int:
        return len(self.records)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _header_line(report: RunReport) -> str:
    scale_bits = report.config.get("run", {}).get("scale_bits", "")
    return f"# simfed-metrics v{report.schema_version} scale_bits={scale_bits} mode={report.mode}"


def write_metrics_csv(report: RunReport, path: str) -> None:
    """One row per (round, participant); baseline modes emit one row per
    round under the mode's own party id."""
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(report) + "\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in report.records:
            if rec.scores:
                for pid in sorted(rec.scores):
                    writer.writerow(
                        [
                            rec.round_index,
                            pid,
                            _fmt(rec.scores[pid]),
                            _fmt(rec.included.get(pid)),
                            _fmt(rec.test_error),
                            _fmt(rec.accuracy),
                            _fmt(rec.threshold),
                        ]
                    )
            else:
                writer.writerow(
                    [
                        rec.round_index,
                        report.mode,
                        "",
                        "",
                        _fmt(rec.test_error),
                        _fmt(rec.accuracy),
                        _fmt(rec.threshold),
                    ]
                )


def read_metrics_csv(path: str) -> dict:
    """Parse a metrics CSV back into header fields plus row dicts."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# simfed-metrics v"):
            raise FormatError(f"{path}: missing metrics header line")
        tokens = first[2:].split()
        try:
            version = int(tokens[1].lstrip("v"))
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: unparseable metrics header {first!r}") from exc
        if version != SCHEMA_VERSION:
            raise FormatError(
                f"{path}: schema version {version} not supported (expected {SCHEMA_VERSION})"
            )
        meta = dict(token.split("=", 1) for token in tokens[2:] if "=" in token)
        rows = list(csv.DictReader(fh))
    return {"version": version, "meta": meta, "rows": rows}


def write_summary_json(report: RunReport, path: str) -> None:
    payload = {
        "schema_version": report.schema_version,
        "mode": report.mode,
        "rounds_completed": report.rounds_completed,
        "final_test_error": report.final_test_error,
        "final_accuracy": report.final_accuracy,
        "stopped_reason": report.stopped_reason,
        "config": report.config,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_timings_json(report: RunReport, path: str) -> None:
    payload = {
        "schema_version": report.schema_version,
        "mode": report.mode,
        "phase_timings_s": report.phase_timings,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
