"""Batch command-line front end.

Subcommands: evaluate (score a manifest into report.json/report.csv), sweep
(threshold grid into sweep.json/sweep.csv plus a best-threshold summary),
train-gate (fit the existence head on a labeled feature dataset), synth
(generate and export a synthetic dataset), convert (PNG dir <-> RLE-JSON).

Exit codes: 0 success, 2 validation error (bad manifest or flags), 3 data
error (unreadable or malformed referenced files), 4 metric undefined under
the active policy. Worker count comes from --jobs, else the GATESEG_JOBS
environment variable, else the CPU count; outputs are identical whatever
the worker count.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from .errors import (
    DataError,
    MetricUndefinedError,
    TrainingError,
    ValidationError,
)
from .gating import (
    GatingConfig,
    TrainConfig,
    dataset_loss,
    forward,
    gate_query,
    sweep,
    tau_grid,
    train,
)
from .manifest import (
    Manifest,
    ManifestQuery,
    export_scenario,
    load_feature_tensor,
    load_head,
    load_manifest,
    load_query,
    load_train_features,
    read_png_dir,
    read_rle_file,
    save_head,
    write_png_dir,
    write_rle_file,
)
from .metrics import (
    DEFAULT_POLICY,
    EMPTY_GT_POLICIES,
    QueryMetrics,
    aggregate_metrics,
    default_radius,
    score_query,
)
from .queries import QueryRecord
from .reports import (
    build_evaluate_payload,
    build_sweep_payload,
    format_metric,
    write_evaluate_reports,
    write_loss_curve,
    write_sweep_reports,
)
from .synth import SCENARIO_PRESETS, gen_scenario

JOBS_ENV_VAR = "GATESEG_JOBS"

T = TypeVar("T")
U = TypeVar("U")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gateseg",
        description="Mask-sequence evaluation and existence gating toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="score a manifest into report.json/report.csv")
    ev.add_argument("--manifest", type=Path, required=True, help="manifest JSON path")
    ev.add_argument("--radius", type=int, default=None,
                    help="boundary tolerance in pixels (default: manifest, else 0.8%% of diagonal)")
    ev.add_argument("--empty-gt-policy", dest="empty_gt_policy",
                    choices=EMPTY_GT_POLICIES, default=None,
                    help="how absent-reference queries enter the J/F means")
    ev.add_argument("--tau", type=float, default=None,
                    help="gate predictions below this existence probability before scoring")
    ev.add_argument("--out", type=Path, required=True, help="output directory")
    _add_jobs_flag(ev)
    ev.add_argument("--no-timestamp", action="store_true",
                    help="omit the timestamp field for byte-reproducible reports")
    ev.set_defaults(handler=cmd_evaluate)

    sw = sub.add_parser("sweep", help="evaluate a whole threshold grid")
    sw.add_argument("--manifest", type=Path, required=True)
    sw.add_argument("--grid", required=True,
                    help="thresholds as start:stop:step, e.g. 0:1:0.05")
    sw.add_argument("--radius", type=int, default=None)
    sw.add_argument("--empty-gt-policy", dest="empty_gt_policy",
                    choices=EMPTY_GT_POLICIES, default=None)
    sw.add_argument("--head", type=Path, default=None,
                    help="trained head JSON; fills missing probabilities from feature refs")
    sw.add_argument("--out", type=Path, required=True)
    _add_jobs_flag(sw)
    sw.add_argument("--no-timestamp", action="store_true")
    sw.set_defaults(handler=cmd_sweep)

    tg = sub.add_parser("train-gate", help="train the existence head on labeled features")
    tg.add_argument("--features", type=Path, required=True,
                    help="labeled feature dataset JSON")
    tg.add_argument("--lr", type=float, default=0.1)
    tg.add_argument("--epochs", type=int, default=500)
    tg.add_argument("--hidden", type=int, default=64)
    tg.add_argument("--seed", type=int, default=0)
    tg.add_argument("--out", type=Path, required=True)
    tg.set_defaults(handler=cmd_train_gate)

    sy = sub.add_parser("synth", help="generate and export a synthetic dataset")
    sy.add_argument("--preset", choices=sorted(SCENARIO_PRESETS), required=True)
    sy.add_argument("--seed", type=int, default=None,
                    help="override the preset's generator seed")
    sy.add_argument("--out", type=Path, required=True)
    sy.add_argument("--mask-format", choices=("rle", "png"), default="rle")
    sy.set_defaults(handler=cmd_synth)

    cv = sub.add_parser("convert", help="convert a mask source between formats")
    cv.add_argument("--from", dest="from_format", choices=("png", "rle"), required=True)
    cv.add_argument("--to", dest="to_format", choices=("png", "rle"), required=True)
    cv.add_argument("src", type=Path, help="PNG directory or RLE-JSON file")
    cv.add_argument("dst", type=Path, help="destination directory or file")
    cv.set_defaults(handler=cmd_convert)
    return parser


def _add_jobs_flag(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--jobs", type=int, default=None,
                     help=f"worker threads (default: ${JOBS_ENV_VAR}, else CPU count)")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MetricUndefinedError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def _resolve_jobs(flag: Optional[int]) -> int:
    if flag is None:
        env = os.environ.get(JOBS_ENV_VAR)
        if env is not None:
            try:
                flag = int(env)
            except ValueError:
                raise ValidationError(
                    "bad-value", f"{JOBS_ENV_VAR} must be an integer, got {env!r}"
                ) from None
    if flag is None:
        return os.cpu_count() or 1
    if flag < 1:
        raise ValidationError("bad-value", f"--jobs must be >= 1, got {flag}")
    return flag


def _parallel_map(jobs: int, fn: Callable[[T], U], items: Sequence[T]) -> list[U]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _timestamp(suppress: bool) -> Optional[str]:
    if suppress:
        return None
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _print_warnings(manifest: Manifest) -> None:
    for message in manifest.warnings:
        print(f"warning: {message}", file=sys.stderr)


def _resolve_radius(flag: Optional[int], manifest: Manifest) -> int:
    radius = flag if flag is not None else manifest.options.radius
    if radius is None:
        return default_radius(manifest.width, manifest.height)
    if radius < 0:
        raise ValidationError("bad-value", f"--radius must be >= 0, got {radius}")
    return radius


def _resolve_policy(flag: Optional[str], manifest: Manifest) -> str:
    return flag or manifest.options.empty_gt_policy or DEFAULT_POLICY


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    _print_warnings(manifest)
    radius = _resolve_radius(args.radius, manifest)
    policy = _resolve_policy(args.empty_gt_policy, manifest)
    tau = args.tau if args.tau is not None else manifest.options.tau
    if tau is not None:
        if not 0.0 <= tau <= 1.0:
            raise ValidationError("bad-value", f"--tau must lie in [0, 1], got {tau}")
        missing = sorted(
            q.query_id for q in manifest.queries if q.existence_prob is None
        )
        if missing:
            raise ValidationError(
                "missing-prob",
                "gating requires existence probabilities; missing for: "
                + ", ".join(missing),
            )
    jobs = _resolve_jobs(args.jobs)

    def score_one(mq: ManifestQuery) -> QueryMetrics:
        record = load_query(manifest, mq)
        if tau is not None:
            record = gate_query(record, GatingConfig(tau=tau))
        return score_query(record, radius, policy)

    ordered = sorted(manifest.queries, key=lambda mq: mq.query_id)
    metrics = _parallel_map(jobs, score_one, ordered)
    report = aggregate_metrics(metrics, policy, radius)
    payload = build_evaluate_payload(
        report,
        metrics,
        options={"radius": radius, "empty_gt_policy": policy, "tau": tau},
        timestamp=_timestamp(args.no_timestamp),
    )
    json_path, csv_path = write_evaluate_reports(args.out, payload, report)
    print(_summary_line(report))
    print(f"wrote {json_path} and {csv_path}")
    return 0


def _summary_line(report) -> str:
    return (
        f"J&F {format_metric(report.jf)} | J {format_metric(report.j)} | "
        f"F {format_metric(report.f)} | N-acc {format_metric(report.n_acc)} | "
        f"T-acc {format_metric(report.t_acc)} | Final {format_metric(report.final)}"
    )


def _parse_grid(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(
            "bad-grid", f"--grid must look like start:stop:step, got {text!r}"
        )
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(
            "bad-grid", f"--grid has non-numeric parts: {text!r}"
        ) from None
    if not 0.0 <= start <= 1.0 or not 0.0 <= stop <= 1.0:
        raise ValidationError("bad-grid", f"grid endpoints must lie in [0, 1]: {text!r}")
    try:
        return tau_grid(start, stop, step)
    except ValueError as e:
        raise ValidationError("bad-grid", str(e)) from None


def cmd_sweep(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    _print_warnings(manifest)
    radius = _resolve_radius(args.radius, manifest)
    policy = _resolve_policy(args.empty_gt_policy, manifest)
    grid = _parse_grid(args.grid)
    head = load_head(args.head) if args.head is not None else None
    jobs = _resolve_jobs(args.jobs)

    def load_one(mq: ManifestQuery) -> QueryRecord:
        record = load_query(manifest, mq)
        if record.existence_prob is None and head is not None and mq.feature_path is not None:
            _, p = forward(head, load_feature_tensor(mq.feature_path))
            record = dataclasses.replace(record, existence_prob=p)
        return record

    queries = _parallel_map(jobs, load_one, manifest.queries)
    missing = sorted(q.query_id for q in queries if q.existence_prob is None)
    if missing:
        raise ValidationError(
            "missing-prob",
            "sweep requires existence probabilities for every query; missing for: "
            + ", ".join(missing),
        )
    result = sweep(queries, grid, radius, policy)
    payload = build_sweep_payload(
        result,
        options={
            "radius": radius,
            "empty_gt_policy": policy,
            "grid": args.grid,
            "head": None if args.head is None else str(args.head),
        },
        timestamp=_timestamp(args.no_timestamp),
    )
    json_path, csv_path = write_sweep_reports(args.out, payload, result)
    best = result.best()
    if best is None:
        print("best tau: n/a (final score undefined across the grid)")
    else:
        print(f"best tau {best[0]:.10g} | {_summary_line(best[1])}")
    print(f"wrote {json_path} and {csv_path}")
    return 0


def cmd_train_gate(args: argparse.Namespace) -> int:
    dataset = load_train_features(args.features)
    labels = {label for _, label in dataset}
    if labels != {0, 1}:
        raise ValidationError(
            "single-class-dataset",
            "training requires at least one positive and one negative sample",
        )
    config = TrainConfig(
        lr=args.lr, epochs=args.epochs, seed=args.seed, hidden=args.hidden
    )
    result = train(None, dataset, config)
    final_loss = (
        result.losses[-1] if result.losses else dataset_loss(result.head, dataset)
    )
    out = Path(args.out)
    head_path = out / "head.json"
    save_head(head_path, result.head)
    curve_path = write_loss_curve(out / "loss_curve.csv", result.losses)
    print(f"final mean BCE: {final_loss:.6f} over {len(dataset)} samples")
    print(f"wrote {head_path} and {curve_path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SCENARIO_PRESETS[args.preset]
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    scenario = gen_scenario(cfg)
    manifest_path = export_scenario(scenario, args.out, mask_format=args.mask_format)
    present = sum(scenario.labels)
    absent = len(scenario.labels) - present
    print(
        f"exported {len(scenario.queries)} queries "
        f"({present} present, {absent} absent) to {manifest_path}"
    )
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    if args.from_format == args.to_format:
        raise ValidationError("bad-value", "--from and --to must name different formats")
    if args.from_format == "png":
        if not args.src.is_dir():
            raise DataError(f"{args.src}: expected a directory of PNG frames")
        seq = read_png_dir(args.src)
    else:
        if not args.src.is_file():
            raise DataError(f"{args.src}: expected an RLE-JSON file")
        seq = read_rle_file(args.src)
    if args.to_format == "rle":
        write_rle_file(args.dst, seq)
    else:
        write_png_dir(args.dst, seq)
    print(
        f"converted {seq.frame_count} frames of {seq.width}x{seq.height} to {args.dst}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
