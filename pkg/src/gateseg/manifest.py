"""Dataset manifest: one JSON document describing a batch of queries.

Layout of a manifest file::

    {
      "format_version": 1,
      "width": 64, "height": 64, "frames": 4,
      "options": {"radius": 3, "empty_gt_policy": "exclude", "tau": 0.8},
      "queries": [
        {"query_id": "q0000",
         "gt": "gt/q0000.json", "pred": "pred/q0000.json",
         "existence_prob": 0.93,
         "transcript": "the red car", "sequence_id": "seq-0000",
         "features": "features/q0000.npy", "frames": 4}, ...
      ]
    }

Mask-source references are paths relative to the manifest's directory (or
absolute): a directory holds 8-bit grayscale PNG frames named 00000.png,
00001.png, ... (value > 127 is foreground); a file holds a JSON array of
per-frame RLE objects {"w", "h", "counts"}. ``options`` and most query
fields are optional; "frames" on a query overrides the manifest-level frame
count for that query.

This module also fixes the on-disk forms of feature tensors (rank-3 ``.npy``
or JSON {"n","t","d","values"} with a flat row-major value list), trained
head parameters, labeled feature datasets for training, and the export of a
synthetic scenario into this layout.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

from .errors import DataError, FormatError, ValidationError
from .gating import ExistenceHead, FeatureTensor
from .masks import (
    MaskSequence,
    binarize,
    rle_decode,
    rle_encode,
    rle_from_json,
    rle_to_json,
)
from .metrics import EMPTY_GT_POLICIES
from .queries import QueryRecord
from .synth import Scenario

MANIFEST_VERSION = 1
HEAD_VERSION = 1
FEATURES_VERSION = 1

_KNOWN_MANIFEST_KEYS = {"format_version", "width", "height", "frames", "options", "queries"}
_KNOWN_OPTION_KEYS = {"radius", "empty_gt_policy", "tau"}
_KNOWN_QUERY_KEYS = {
    "query_id",
    "gt",
    "pred",
    "existence_prob",
    "transcript",
    "sequence_id",
    "features",
    "frames",
}


@dataclass(frozen=True)
class EvalOptions:
    """Manifest-level evaluation defaults; CLI flags override these."""

    radius: Optional[int] = None
    empty_gt_policy: Optional[str] = None
    tau: Optional[float] = None


@dataclass(frozen=True)
class ManifestQuery:
    """One query as declared in the manifest, refs unresolved and resolved."""

    query_id: str
    gt_ref: str
    pred_ref: str
    gt_path: Path
    pred_path: Path
    frames: int
    existence_prob: Optional[float] = None
    transcript: Optional[str] = None
    sequence_id: Optional[str] = None
    feature_ref: Optional[str] = None
    feature_path: Optional[Path] = None


@dataclass(frozen=True)
class Manifest:
    format_version: int
    width: int
    height: int
    frames: int
    queries: tuple[ManifestQuery, ...]
    options: EvalOptions
    path: Path
    warnings: tuple[str, ...] = ()


def _require(condition: bool, code: str, message: str) -> None:
    if not condition:
        raise ValidationError(code, message)


def _positive_int(obj: dict, key: str, code: str = "bad-value") -> int:
    _require(key in obj, "missing-field", f"manifest is missing {key!r}")
    v = obj[key]
    _require(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
             code, f"{key!r} must be a positive integer, got {v!r}")
    return v


def load_manifest(path: Union[str, Path]) -> Manifest:
    """Read and fully validate a manifest document.

    Violations raise :class:`ValidationError` with a machine-readable code
    (``unknown-version``, ``duplicate-query-id``, ``unresolvable-ref``,
    ``missing-field``, ``bad-value``, ``empty-manifest``, ``invalid-json``,
    ``unreadable-manifest``) and a message naming the query and field.
    Unknown keys are tolerated and reported in ``Manifest.warnings``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ValidationError("unreadable-manifest", f"cannot read {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError("invalid-json", f"{path} is not valid JSON: {e}") from e
    _require(isinstance(doc, dict), "invalid-json", f"{path} must hold a JSON object")

    version = doc.get("format_version")
    _require(version == MANIFEST_VERSION, "unknown-version",
             f"unsupported manifest format_version {version!r} (expected {MANIFEST_VERSION})")
    width = _positive_int(doc, "width")
    height = _positive_int(doc, "height")
    frames = _positive_int(doc, "frames")

    warnings = [
        f"unknown manifest key {k!r}" for k in sorted(set(doc) - _KNOWN_MANIFEST_KEYS)
    ]

    options = _parse_options(doc.get("options", {}), warnings)

    raw_queries = doc.get("queries")
    _require(isinstance(raw_queries, list) and len(raw_queries) > 0,
             "empty-manifest", f"{path} declares no queries")

    base = path.parent
    seen: set[str] = set()
    queries = []
    for i, raw in enumerate(raw_queries):
        _require(isinstance(raw, dict), "bad-value", f"queries[{i}] must be an object")
        qid = raw.get("query_id")
        _require(isinstance(qid, str) and bool(qid), "missing-field",
                 f"queries[{i}] needs a non-empty query_id")
        _require(qid not in seen, "duplicate-query-id",
                 f"query_id {qid!r} appears more than once")
        seen.add(qid)
        warnings.extend(
            f"query {qid!r}: unknown key {k!r}"
            for k in sorted(set(raw) - _KNOWN_QUERY_KEYS)
        )
        gt_ref = _ref_field(raw, "gt", qid)
        pred_ref = _ref_field(raw, "pred", qid)
        gt_path = _resolve_ref(base, gt_ref, qid, "gt")
        pred_path = _resolve_ref(base, pred_ref, qid, "pred")

        q_frames = raw.get("frames", frames)
        _require(isinstance(q_frames, int) and not isinstance(q_frames, bool) and q_frames >= 1,
                 "bad-value", f"query {qid!r}: frames must be a positive integer")

        prob = raw.get("existence_prob")
        if prob is not None:
            _require(isinstance(prob, (int, float)) and not isinstance(prob, bool)
                     and 0.0 <= float(prob) <= 1.0,
                     "bad-value", f"query {qid!r}: existence_prob must lie in [0, 1]")
            prob = float(prob)

        transcript = _optional_str(raw, "transcript", qid)
        sequence_id = _optional_str(raw, "sequence_id", qid)

        feature_ref = raw.get("features")
        feature_path = None
        if feature_ref is not None:
            _require(isinstance(feature_ref, str) and bool(feature_ref), "bad-value",
                     f"query {qid!r}: features must be a non-empty path string")
            feature_path = _resolve_ref(base, feature_ref, qid, "features")

        queries.append(ManifestQuery(
            query_id=qid,
            gt_ref=gt_ref,
            pred_ref=pred_ref,
            gt_path=gt_path,
            pred_path=pred_path,
            frames=q_frames,
            existence_prob=prob,
            transcript=transcript,
            sequence_id=sequence_id,
            feature_ref=feature_ref,
            feature_path=feature_path,
        ))
    return Manifest(
        format_version=version,
        width=width,
        height=height,
        frames=frames,
        queries=tuple(queries),
        options=options,
        path=path,
        warnings=tuple(warnings),
    )


def _parse_options(raw, warnings: list) -> EvalOptions:
    _require(isinstance(raw, dict), "bad-value", "options must be an object")
    warnings.extend(
        f"unknown options key {k!r}" for k in sorted(set(raw) - _KNOWN_OPTION_KEYS)
    )
    radius = raw.get("radius")
    if radius is not None:
        _require(isinstance(radius, int) and not isinstance(radius, bool) and radius >= 0,
                 "bad-value", f"options.radius must be an integer >= 0, got {radius!r}")
    policy = raw.get("empty_gt_policy")
    if policy is not None:
        _require(policy in EMPTY_GT_POLICIES, "bad-value",
                 f"options.empty_gt_policy must be one of {EMPTY_GT_POLICIES}, got {policy!r}")
    tau = raw.get("tau")
    if tau is not None:
        _require(isinstance(tau, (int, float)) and not isinstance(tau, bool)
                 and 0.0 <= float(tau) <= 1.0,
                 "bad-value", f"options.tau must lie in [0, 1], got {tau!r}")
        tau = float(tau)
    return EvalOptions(radius=radius, empty_gt_policy=policy, tau=tau)


def _ref_field(raw: dict, key: str, qid: str) -> str:
    ref = raw.get(key)
    _require(isinstance(ref, str) and bool(ref), "missing-field",
             f"query {qid!r} needs a {key!r} mask-source path")
    return ref


def _resolve_ref(base: Path, ref: str, qid: str, field: str) -> Path:
    resolved = (base / ref) if not Path(ref).is_absolute() else Path(ref)
    _require(resolved.exists(), "unresolvable-ref",
             f"query {qid!r}: {field} reference {ref!r} does not exist")
    return resolved


def _optional_str(raw: dict, key: str, qid: str) -> Optional[str]:
    v = raw.get(key)
    if v is None:
        return None
    _require(isinstance(v, str), "bad-value", f"query {qid!r}: {key} must be a string")
    return v


def manifest_to_json(manifest: Manifest) -> dict:
    """Canonical serializable form; loading it back yields the same document."""
    queries = []
    for q in manifest.queries:
        entry: dict = {"query_id": q.query_id, "gt": q.gt_ref, "pred": q.pred_ref}
        if q.frames != manifest.frames:
            entry["frames"] = q.frames
        if q.existence_prob is not None:
            entry["existence_prob"] = q.existence_prob
        if q.transcript is not None:
            entry["transcript"] = q.transcript
        if q.sequence_id is not None:
            entry["sequence_id"] = q.sequence_id
        if q.feature_ref is not None:
            entry["features"] = q.feature_ref
        queries.append(entry)
    doc: dict = {
        "format_version": manifest.format_version,
        "width": manifest.width,
        "height": manifest.height,
        "frames": manifest.frames,
        "queries": queries,
    }
    options = {}
    if manifest.options.radius is not None:
        options["radius"] = manifest.options.radius
    if manifest.options.empty_gt_policy is not None:
        options["empty_gt_policy"] = manifest.options.empty_gt_policy
    if manifest.options.tau is not None:
        options["tau"] = manifest.options.tau
    if options:
        doc["options"] = options
    return doc


# ---------------------------------------------------------------- mask sources

def read_png_dir(path: Path) -> MaskSequence:
    """Load a directory of grayscale PNG frames in name order."""
    names = sorted(p.name for p in path.iterdir() if p.suffix.lower() == ".png")
    if not names:
        raise DataError(f"{path}: no .png frames found")
    frames = []
    for name in names:
        try:
            with Image.open(path / name) as img:
                gray = np.asarray(img.convert("L"))
        except OSError as e:
            raise DataError(f"{path / name}: cannot read PNG: {e}") from e
        frames.append(binarize(gray))
    try:
        return MaskSequence.from_masks(frames)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def read_rle_file(path: Path) -> MaskSequence:
    """Load a JSON array of per-frame RLE objects."""
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DataError(f"{path}: cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, list) or not doc:
        raise FormatError(f"{path}: expected a non-empty JSON array of RLE frames")
    frames = []
    for i, obj in enumerate(doc):
        try:
            frames.append(rle_decode(rle_from_json(obj)))
        except FormatError as e:
            raise FormatError(f"{path}: frame {i}: {e}") from e
    try:
        return MaskSequence.from_masks(frames)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def load_mask_source(
    ref: Union[str, Path], width: int, height: int, frames: int
) -> MaskSequence:
    """Load a mask source and check it against the expected geometry."""
    path = Path(ref)
    if path.is_dir():
        seq = read_png_dir(path)
    elif path.is_file():
        seq = read_rle_file(path)
    else:
        raise DataError(f"{path}: mask source does not exist")
    if seq.frame_count != frames:
        raise DataError(
            f"{path}: expected {frames} frames, found {seq.frame_count}"
        )
    if (seq.height, seq.width) != (height, width):
        raise DataError(
            f"{path}: frames are {seq.width}x{seq.height}, "
            f"manifest declares {width}x{height}"
        )
    return seq


def write_png_dir(path: Path, seq: MaskSequence) -> None:
    """Write one 8-bit grayscale PNG per frame, named 00000.png, 00001.png, ..."""
    path.mkdir(parents=True, exist_ok=True)
    for t in range(seq.frame_count):
        gray = seq.frame(t).pixels.astype(np.uint8) * 255
        Image.fromarray(gray, mode="L").save(path / f"{t:05d}.png")


def write_rle_file(path: Path, seq: MaskSequence) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [rle_to_json(rle_encode(seq.frame(t))) for t in range(seq.frame_count)]
    path.write_text(json.dumps(payload, sort_keys=True))


def load_query(manifest: Manifest, mq: ManifestQuery) -> QueryRecord:
    """Materialize one manifest query into an in-memory record."""
    gt = load_mask_source(mq.gt_path, manifest.width, manifest.height, mq.frames)
    pred = load_mask_source(mq.pred_path, manifest.width, manifest.height, mq.frames)
    return QueryRecord(
        query_id=mq.query_id,
        gt=gt,
        pred=pred,
        existence_prob=mq.existence_prob,
        transcript=mq.transcript,
        sequence_id=mq.sequence_id,
    )


# ------------------------------------------------------------- feature tensors

def load_feature_tensor(path: Union[str, Path]) -> FeatureTensor:
    """Read a rank-3 tensor from ``.npy`` or the JSON {"n","t","d","values"} form."""
    path = Path(path)
    if path.suffix == ".npy":
        try:
            arr = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as e:
            raise DataError(f"{path}: cannot read npy: {e}") from e
        if arr.ndim != 3:
            raise FormatError(f"{path}: expected a rank-3 array, got shape {arr.shape}")
        return FeatureTensor(arr.astype(np.float64))
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DataError(f"{path}: cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    return _tensor_from_json(doc, where=str(path))


def _tensor_from_json(doc, where: str) -> FeatureTensor:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: feature tensor must be a JSON object")
    missing = {"n", "t", "d", "values"} - set(doc)
    if missing:
        raise FormatError(f"{where}: feature tensor missing keys {sorted(missing)}")
    n, t, d, values = doc["n"], doc["t"], doc["d"], doc["values"]
    for key, v in (("n", n), ("t", t), ("d", d)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise FormatError(f"{where}: {key!r} must be a positive integer")
    if not isinstance(values, list) or len(values) != n * t * d:
        raise FormatError(
            f"{where}: 'values' must be a flat list of n*t*d = {n * t * d} numbers"
        )
    try:
        arr = np.asarray(values, dtype=np.float64).reshape(n, t, d)
    except (TypeError, ValueError) as e:
        raise FormatError(f"{where}: values are not numeric: {e}") from e
    try:
        return FeatureTensor(arr)
    except ValueError as e:
        raise FormatError(f"{where}: {e}") from e


def tensor_to_json(f: FeatureTensor) -> dict:
    return {
        "n": f.n,
        "t": f.t,
        "d": f.d,
        "values": [float(v) for v in f.values.ravel()],
    }


def save_feature_tensor(path: Union[str, Path], f: FeatureTensor) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npy":
        np.save(path, f.values)
    else:
        path.write_text(json.dumps(tensor_to_json(f), sort_keys=True))


# ------------------------------------------------------------ head parameters

def head_to_json(head: ExistenceHead) -> dict:
    return {
        "format_version": HEAD_VERSION,
        "h": head.hidden_dim,
        "d": head.input_dim,
        "w1": [[float(v) for v in row] for row in head.w1],
        "b1": [float(v) for v in head.b1],
        "w2": [float(v) for v in head.w2],
        "b2": head.b2,
        "seed": head.seed,
    }


def head_from_json(doc, where: str = "head") -> ExistenceHead:
    if not isinstance(doc, dict):
        raise FormatError(f"{where}: head document must be a JSON object")
    if doc.get("format_version") != HEAD_VERSION:
        raise FormatError(
            f"{where}: unsupported head format_version {doc.get('format_version')!r}"
        )
    missing = {"h", "d", "w1", "b1", "w2", "b2"} - set(doc)
    if missing:
        raise FormatError(f"{where}: head document missing keys {sorted(missing)}")
    h, d = doc["h"], doc["d"]
    try:
        head = ExistenceHead(
            w1=np.asarray(doc["w1"], dtype=np.float64),
            b1=np.asarray(doc["b1"], dtype=np.float64),
            w2=np.asarray(doc["w2"], dtype=np.float64),
            b2=float(doc["b2"]),
            seed=doc.get("seed"),
        )
    except (TypeError, ValueError) as e:
        raise FormatError(f"{where}: bad head parameters: {e}") from e
    if head.hidden_dim != h or head.input_dim != d:
        raise FormatError(
            f"{where}: declared dims h={h}, d={d} do not match parameter shapes "
            f"{head.hidden_dim}x{head.input_dim}"
        )
    return head


def save_head(path: Union[str, Path], head: ExistenceHead) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(head_to_json(head), sort_keys=True, indent=2) + "\n")


def load_head(path: Union[str, Path]) -> ExistenceHead:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DataError(f"{path}: cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    return head_from_json(doc, where=str(path))


# ------------------------------------------------------- labeled feature sets

def save_train_features(
    path: Union[str, Path], dataset: Sequence[tuple[FeatureTensor, int]]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FEATURES_VERSION,
        "samples": [
            {"label": int(label), "tensor": tensor_to_json(f)} for f, label in dataset
        ],
    }
    path.write_text(json.dumps(payload, sort_keys=True))


def load_train_features(path: Union[str, Path]) -> list[tuple[FeatureTensor, int]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DataError(f"{path}: cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("format_version") != FEATURES_VERSION:
        raise FormatError(f"{path}: unsupported feature-dataset document")
    samples = doc.get("samples")
    if not isinstance(samples, list) or not samples:
        raise FormatError(f"{path}: 'samples' must be a non-empty list")
    dataset = []
    for i, sample in enumerate(samples):
        if not isinstance(sample, dict) or "label" not in sample or "tensor" not in sample:
            raise FormatError(f"{path}: samples[{i}] needs 'label' and 'tensor'")
        label = sample["label"]
        if label not in (0, 1):
            raise FormatError(f"{path}: samples[{i}] label must be 0 or 1, got {label!r}")
        tensor = _tensor_from_json(sample["tensor"], where=f"{path}: samples[{i}]")
        dataset.append((tensor, int(label)))
    return dataset


# ------------------------------------------------------------ scenario export

def export_scenario(
    scenario: Scenario, out_dir: Union[str, Path], mask_format: str = "rle"
) -> Path:
    """Write a scenario as a loadable dataset; returns the manifest path.

    Produces manifest.json, per-query mask sources under gt/ and pred/,
    per-query feature tensors under features/, a labeled feature dataset
    train_features.json, and scenario.json with the generator bookkeeping.
    """
    if mask_format not in ("rle", "png"):
        raise ValueError(f"mask_format must be 'rle' or 'png', got {mask_format!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = scenario.config

    entries = []
    for q in scenario.queries:
        if mask_format == "rle":
            gt_ref = f"gt/{q.query_id}.json"
            pred_ref = f"pred/{q.query_id}.json"
            write_rle_file(out / gt_ref, q.gt)
            write_rle_file(out / pred_ref, q.pred)
        else:
            gt_ref = f"gt/{q.query_id}"
            pred_ref = f"pred/{q.query_id}"
            write_png_dir(out / gt_ref, q.gt)
            write_png_dir(out / pred_ref, q.pred)
        feature_ref = f"features/{q.query_id}.npy"
        save_feature_tensor(out / feature_ref, q.features)
        entries.append({
            "query_id": q.query_id,
            "gt": gt_ref,
            "pred": pred_ref,
            "existence_prob": q.existence_prob,
            "transcript": q.transcript,
            "sequence_id": q.sequence_id,
            "features": feature_ref,
        })

    manifest_doc = {
        "format_version": MANIFEST_VERSION,
        "width": cfg.width,
        "height": cfg.height,
        "frames": cfg.frames,
        "queries": entries,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest_doc, sort_keys=True, indent=2) + "\n")

    save_train_features(out / "train_features.json", scenario.train_dataset())

    bookkeeping = {
        "metadata": dict(scenario.metadata),
        "config": asdict(cfg),
        "labels": {q.query_id: bool(label)
                   for q, label in zip(scenario.queries, scenario.labels)},
    }
    (out / "scenario.json").write_text(json.dumps(bookkeeping, sort_keys=True, indent=2) + "\n")
    return manifest_path
