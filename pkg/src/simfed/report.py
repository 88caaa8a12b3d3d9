"""Cross-run comparison of metrics files.

Aligns several runs' per-round metrics on round index; rounds missing
from a shorter run are padded with an explicit marker so columns stay
rectangular. No plotting here, only plot-ready series.
"""

from __future__ import annotations

import json

from .errors import FormatError
from .metrics import read_metrics_csv

PAD = "NA"


def _run_name(path: str, index: int, seen: set) -> str:
    parts = path.replace("\\", "/").rstrip("/").split("/")
    base = parts[-1]
    if base.endswith(".csv"):
        base = base[:-4]
    # Run directories typically hold a generic metrics.csv; the directory
    # name is the informative part.
    if base == "metrics" and len(parts) > 1:
        base = parts[-2]
    name = base if base not in seen else f"{base}#{index}"
    seen.add(name)
    return name


def load_runs(paths) -> dict:
    """Parse metrics CSVs into {run_name: {round: {party: row}}}."""
    if not paths:
        raise FormatError("need at least one metrics file")
    runs = {}
    seen: set = set()
    for index, path in enumerate(paths):
        parsed = read_metrics_csv(path)
        by_round: dict = {}
        for row in parsed["rows"]:
            rnd = int(row["round"])
            by_round.setdefault(rnd, {})[row["party_id"]] = row
        runs[_run_name(path, index, seen)] = {
            "meta": parsed["meta"],
            "rounds": by_round,
        }
    return runs


def comparison_table(runs: dict) -> tuple:
    """Aligned per-round table: header row plus one row per round index.

    Shared-prefix rounds carry values from every run; beyond a run's last
    round its cells hold the PAD marker.
    """
    all_rounds = sorted({r for run in runs.values() for r in run["rounds"]})
    # Similarity columns only for parties that ever reported a score
    # (baseline rows carry none).
    party_cols = {
        name: sorted(
            {
                p
                for rows in run["rounds"].values()
                for p, row in rows.items()
                if row["similarity"]
            }
        )
        for name, run in runs.items()
    }
    header = ["round"]
    for name in runs:
        header.append(f"{name}/accuracy")
        header.append(f"{name}/test_error")
        for party in party_cols[name]:
            header.append(f"{name}/{party}/similarity")
    table = [header]
    for rnd in all_rounds:
        row = [str(rnd)]
        for name, run in runs.items():
            rows = run["rounds"].get(rnd)
            if rows is None:
                row.extend([PAD, PAD])
                row.extend([PAD] * len(party_cols[name]))
                continue
            any_row = next(iter(rows.values()))
            row.append(any_row["accuracy"])
            row.append(any_row["test_error"])
            for party in party_cols[name]:
                cell = rows.get(party)
                row.append(cell["similarity"] if cell and cell["similarity"] else PAD)
        table.append(row)
    return tuple(tuple(r) for r in table)


def render_table(table) -> str:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = []
    for row in table:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)))
    return "\n".join(lines)


def plot_series(runs: dict) -> dict:
    """Plot-ready series per run: rounds, accuracy, test_error, and one
    similarity series per party."""
    out = {}
    for name, run in runs.items():
        rounds = sorted(run["rounds"])
        accuracy = []
        test_error = []
        parties = sorted({p for rows in run["rounds"].values() for p in rows})
        similarity = {p: [] for p in parties}
        for rnd in rounds:
            rows = run["rounds"][rnd]
            any_row = next(iter(rows.values()))
            accuracy.append(float(any_row["accuracy"]))
            test_error.append(float(any_row["test_error"]))
            for p in parties:
                cell = rows.get(p)
                similarity[p].append(
                    float(cell["similarity"]) if cell and cell["similarity"] else None
                )
        out[name] = {
            "rounds": rounds,
            "accuracy": accuracy,
            "test_error": test_error,
            "similarity": similarity,
        }
    return out


def write_plot_series(runs: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(plot_series(runs), fh, indent=2, sort_keys=True)
        fh.write("\n")
