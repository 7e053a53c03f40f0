"""Report emission: rounding, formatting, and file layout tests."""
import csv
import json
from decimal import Decimal

import numpy as np
import pytest

from gateseg.masks import Mask, MaskSequence
from gateseg.metrics import aggregate
from gateseg.queries import QueryRecord
from gateseg.reports import (
    CSV_COLUMNS,
    build_evaluate_payload,
    build_sweep_payload,
    format_metric,
    round_half_up,
    write_evaluate_reports,
    write_loss_curve,
    write_sweep_reports,
)
from gateseg.gating import sweep
from gateseg.metrics import score_query


def make_queries():
    on = MaskSequence.from_masks([Mask(np.ones((4, 4), dtype=bool))])
    off = MaskSequence.zeros(1, 4, 4)
    return [
        QueryRecord(query_id="p0", gt=on, pred=on, existence_prob=0.9),
        QueryRecord(query_id="a0", gt=off, pred=off, existence_prob=0.1),
    ]


class TestRounding:
    def test_half_up_at_the_tie(self):
        assert round_half_up(0.445) == Decimal("0.45")
        assert round_half_up(0.125) == Decimal("0.13")

    def test_plain_cases(self):
        assert round_half_up(0.4449) == Decimal("0.44")
        assert round_half_up(0.6866666) == Decimal("0.69")
        assert round_half_up(1.0) == Decimal("1.00")
        assert round_half_up(0.0) == Decimal("0.00")

    def test_places_parameter(self):
        assert round_half_up(0.12345, places=4) == Decimal("0.1235")
        # 0.15 in binary is slightly below the tie, so half-up gives 0.1
        assert round_half_up(0.15, places=1) == Decimal("0.1")

    def test_operates_on_exact_binary_value(self):
        # 2.675 is stored as 2.67499999..., so half-up at 2 places gives 2.67;
        # rounding the decimal literal would give 2.68
        assert round_half_up(2.675) == Decimal("2.67")

    def test_format_metric(self):
        assert format_metric(0.6866666) == "0.69"
        assert format_metric(1.0) == "1.00"
        assert format_metric(None) == "n/a"


class TestEvaluateReports:
    def test_report_files_and_shapes(self, tmp_path):
        queries = make_queries()
        report = aggregate(queries, radius=1)
        per_query = [score_query(q, 1) for q in sorted(queries, key=lambda q: q.query_id)]
        payload = build_evaluate_payload(
            report, per_query, options={"radius": 1}, timestamp=None
        )
        json_path, csv_path = write_evaluate_reports(tmp_path, payload, report)
        assert json_path.name == "report.json" and csv_path.name == "report.csv"

        doc = json.loads(json_path.read_text())
        assert doc["aggregate"]["jf"] == 1.0
        assert doc["aggregate"]["counts"] == {"tp": 1, "tn": 1, "fp": 0, "fn": 0}
        assert [q["query_id"] for q in doc["queries"]] == ["a0", "p0"]
        assert "timestamp" not in doc

        with csv_path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(CSV_COLUMNS)
        assert rows[1] == ["1.00", "1.00", "1.00", "1.00", "1.00", "1.00"]

    def test_timestamp_included_when_given(self, tmp_path):
        queries = make_queries()
        report = aggregate(queries, radius=1)
        payload = build_evaluate_payload(report, [], options={}, timestamp="2026-01-01T00:00:00+00:00")
        assert payload["timestamp"] == "2026-01-01T00:00:00+00:00"

    def test_undefined_cells_render_na(self, tmp_path):
        queries = [make_queries()[0]]  # only the present query: N-acc undefined
        report = aggregate(queries, radius=1)
        payload = build_evaluate_payload(report, [], options={}, timestamp=None)
        _, csv_path = write_evaluate_reports(tmp_path, payload, report)
        with csv_path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[1][3] == "n/a"  # N-acc
        assert rows[1][5] == "n/a"  # Final
        assert json.loads((tmp_path / "report.json").read_text())["aggregate"]["n_acc"] is None

    def test_json_is_byte_deterministic(self, tmp_path):
        queries = make_queries()
        report = aggregate(queries, radius=1)
        per_query = [score_query(q, 1) for q in queries]
        payload = build_evaluate_payload(report, per_query, options={"radius": 1}, timestamp=None)
        a = write_evaluate_reports(tmp_path / "a", payload, report)[0].read_bytes()
        b = write_evaluate_reports(tmp_path / "b", payload, report)[0].read_bytes()
        assert a == b


class TestSweepReports:
    def test_sweep_files(self, tmp_path):
        queries = make_queries()
        result = sweep(queries, [0.0, 0.5, 1.0], radius=1)
        payload = build_sweep_payload(result, options={"radius": 1}, timestamp=None)
        json_path, csv_path = write_sweep_reports(tmp_path, payload, result)

        doc = json.loads(json_path.read_text())
        assert [row["tau"] for row in doc["grid"]] == [0.0, 0.5, 1.0]
        assert doc["best"]["tau"] == 0.0

        with csv_path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["tau", *CSV_COLUMNS]
        assert len(rows) == 4
        assert rows[1][0] == "0"

    def test_best_none_when_finals_undefined(self, tmp_path):
        on = MaskSequence.from_masks([Mask(np.ones((2, 2), dtype=bool))])
        queries = [QueryRecord(query_id="p", gt=on, pred=on, existence_prob=0.5)]
        result = sweep(queries, [0.9], radius=1)  # gated: T-acc 0, N-acc undefined
        payload = build_sweep_payload(result, options={}, timestamp=None)
        assert payload["best"] is None
        json_path, _ = write_sweep_reports(tmp_path, payload, result)
        assert json.loads(json_path.read_text())["best"] is None


class TestLossCurve:
    def test_rows_and_precision(self, tmp_path):
        losses = [0.6931471805599453, 0.25, 0.1]
        path = write_loss_curve(tmp_path / "loss.csv", losses)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "mean_bce"]
        assert rows[1] == ["0", repr(0.6931471805599453)]
        assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
        # full precision survives the text round trip
        assert float(rows[1][1]) == losses[0]

    def test_empty_history(self, tmp_path):
        path = write_loss_curve(tmp_path / "loss.csv", [])
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows == [["epoch", "mean_bce"]]
