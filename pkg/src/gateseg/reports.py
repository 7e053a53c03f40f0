"""Report emission: half-up rounding, JSON payloads, CSV tables.

JSON files carry full-precision values and are byte-deterministic for a
given input (sorted keys, no timestamp when suppressed). CSV files are the
human/table consumption format: every metric cell is rounded half-up to two
decimals, and cells whose metric is undefined render as "n/a". Rounding
happens only here, never inside the metric computations.
"""
from __future__ import annotations

import csv
import json
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Sequence, Union

from .gating import SweepResult
from .metrics import AggregateReport, QueryMetrics

REPORT_VERSION = 1
CSV_COLUMNS = ("J&F", "J", "F", "N-acc", "T-acc", "Final")


def round_half_up(value: float, places: int = 2) -> Decimal:
    """Round the exact binary value half-up at ``places`` decimals.

    Ties round away from zero (0.445 -> 0.45), unlike float formatting's
    round-half-even. The input is taken at full precision: no prior decimal
    rounding is applied.
    """
    quantum = Decimal(1).scaleb(-places)
    return Decimal(value).quantize(quantum, rounding=ROUND_HALF_UP)


def format_metric(value: Optional[float], places: int = 2) -> str:
    """Two-decimal table cell; undefined metrics render as \"n/a\"."""
    if value is None:
        return "n/a"
    return str(round_half_up(value, places))


def aggregate_to_json(report: AggregateReport) -> dict:
    return {
        "j": report.j,
        "f": report.f,
        "jf": report.jf,
        "n_acc": report.n_acc,
        "t_acc": report.t_acc,
        "final": report.final,
        "counts": {
            "tp": report.counts.tp,
            "tn": report.counts.tn,
            "fp": report.counts.fp,
            "fn": report.counts.fn,
        },
        "query_count": report.query_count,
        "scored_query_count": report.scored_count,
        "policy": report.policy,
        "radius": report.radius,
    }


def _query_to_json(m: QueryMetrics) -> dict:
    return {
        "query_id": m.query_id,
        "j_mean": m.j_mean,
        "f_mean": m.f_mean,
        "jf_mean": m.jf_mean,
        "gt_present": m.gt_present,
        "pred_present": m.pred_present,
    }


def build_evaluate_payload(
    report: AggregateReport,
    per_query: Sequence[QueryMetrics],
    options: dict,
    timestamp: Optional[str],
) -> dict:
    payload = {
        "format_version": REPORT_VERSION,
        "options": options,
        "aggregate": aggregate_to_json(report),
        "queries": [
            _query_to_json(m) for m in sorted(per_query, key=lambda m: m.query_id)
        ],
    }
    if timestamp is not None:
        payload["timestamp"] = timestamp
    return payload


def _aggregate_csv_row(report: AggregateReport) -> list[str]:
    return [
        format_metric(report.jf),
        format_metric(report.j),
        format_metric(report.f),
        format_metric(report.n_acc),
        format_metric(report.t_acc),
        format_metric(report.final),
    ]


def write_evaluate_reports(out_dir: Union[str, Path], payload: dict,
                           report: AggregateReport) -> tuple[Path, Path]:
    """Write report.json (full precision) and report.csv (2-decimal table)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    csv_path = out / "report.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerow(_aggregate_csv_row(report))
    return json_path, csv_path


def build_sweep_payload(
    result: SweepResult, options: dict, timestamp: Optional[str]
) -> dict:
    best = result.best()
    payload = {
        "format_version": REPORT_VERSION,
        "options": options,
        "grid": [
            {"tau": tau, "aggregate": aggregate_to_json(report)}
            for tau, report in result.grid
        ],
        "best": None if best is None else {
            "tau": best[0],
            "aggregate": aggregate_to_json(best[1]),
        },
    }
    if timestamp is not None:
        payload["timestamp"] = timestamp
    return payload


def write_sweep_reports(out_dir: Union[str, Path], payload: dict,
                        result: SweepResult) -> tuple[Path, Path]:
    """Write sweep.json (full precision) and sweep.csv (one row per tau)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "sweep.json"
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    csv_path = out / "sweep.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("tau",) + CSV_COLUMNS)
        for tau, report in result.grid:
            writer.writerow([f"{tau:.10g}"] + _aggregate_csv_row(report))
    return json_path, csv_path


def write_loss_curve(path: Union[str, Path], losses: Sequence[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "mean_bce"))
        for epoch, loss in enumerate(losses):
            writer.writerow((epoch, repr(loss)))
    return path
