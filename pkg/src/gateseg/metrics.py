"""Region similarity J, boundary F-measure, presence accuracies, aggregation.

Score semantics in one place:

* ``region_j`` is intersection-over-union per frame; two empty masks score
  1.0 (correct absence), an empty/non-empty pair scores 0.0.
* ``boundary_f`` is the F-measure between mask boundaries where a boundary
  pixel counts as matched when some counterpart boundary pixel lies within a
  Euclidean ``radius``. Matching is coverage, not one-to-one assignment.
* presence accuracies are query-level: ``n_acc`` = TN/(TN+FP) over queries
  whose reference is all-empty, ``t_acc`` = TP/(TP+FN) over the rest.
* the combined ``final_score`` averages J&F, n_acc, and t_acc.

Queries whose reference sequence is entirely empty contribute to J/F means
according to a policy: ``include-full-credit`` (default) scores such a query
1.0 when its prediction is empty and 0.0 otherwise, ``exclude`` drops it from
the J/F means entirely. Accuracies always count every query.

Aggregation is deterministic and independent of worker scheduling: confusion
counts are exact integers and means use compensated summation, so any
permutation of the same queries produces bit-identical reports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import MetricUndefinedError
from .masks import Mask, MaskSequence, indicator
from .queries import QueryRecord

POLICY_FULL_CREDIT = "include-full-credit"
POLICY_EXCLUDE = "exclude"
EMPTY_GT_POLICIES = (POLICY_FULL_CREDIT, POLICY_EXCLUDE)
DEFAULT_POLICY = POLICY_FULL_CREDIT

# pair counts up to this product use one dense distance matrix; larger
# boundaries go through a k-d tree to keep matching near-linear
_DENSE_PAIR_LIMIT = 1 << 16


def _check_policy(policy: str) -> None:
    if policy not in EMPTY_GT_POLICIES:
        raise ValueError(
            f"unknown empty-GT policy {policy!r}; expected one of {EMPTY_GT_POLICIES}"
        )


def region_j(pred: Mask, gt: Mask) -> float:
    """Intersection-over-union of two masks; 1.0 when both are empty."""
    if pred.pixels.shape != gt.pixels.shape:
        raise ValueError(
            f"mask dimensions differ: {pred.pixels.shape} vs {gt.pixels.shape}"
        )
    intersection = int(np.logical_and(pred.pixels, gt.pixels).sum())
    union = int(np.logical_or(pred.pixels, gt.pixels).sum())
    if union == 0:
        return 1.0
    return intersection / union


def extract_boundary(mask: Mask) -> Mask:
    """Pixels that are foreground with a 4-neighbor outside the foreground.

    Neighbors beyond the image edge count as background, so a mask touching
    the border is boundary there.
    """
    fg = mask.pixels
    interior_neighbors = np.zeros(fg.shape, dtype=bool)
    if fg.shape[0] > 1 and fg.shape[1] > 1:
        up = np.zeros_like(fg)
        down = np.zeros_like(fg)
        left = np.zeros_like(fg)
        right = np.zeros_like(fg)
        up[1:, :] = fg[:-1, :]
        down[:-1, :] = fg[1:, :]
        left[:, 1:] = fg[:, :-1]
        right[:, :-1] = fg[:, 1:]
        interior_neighbors = up & down & left & right
    return Mask(fg & ~interior_neighbors)


def default_radius(width: int, height: int) -> int:
    """Boundary tolerance: 0.8% of the image diagonal, at least 1 pixel."""
    if width < 1 or height < 1:
        raise ValueError(f"dimensions must be positive, got {width}x{height}")
    return max(1, math.ceil(0.008 * math.hypot(width, height)))


def _covered_fraction(points: np.ndarray, targets: np.ndarray, radius: int) -> float:
    """Fraction of ``points`` within ``radius`` of some target point.

    Coordinates are integer-valued, so squared distances are exact in float64
    and the comparison against radius**2 has no rounding ambiguity.
    """
    if len(points) * len(targets) <= _DENSE_PAIR_LIMIT:
        d2 = cdist(points, targets, "sqeuclidean")
        hit = (d2 <= radius * radius).any(axis=1)
    else:
        dist, _ = cKDTree(targets).query(points, k=1, distance_upper_bound=radius + 0.5)
        hit = dist <= radius
    return float(hit.mean())


def boundary_f(pred: Mask, gt: Mask, radius: int) -> float:
    """Boundary F-measure 2PR/(P+R) under a pixel tolerance radius.

    P is the fraction of prediction-boundary pixels within ``radius`` of the
    reference boundary; R is symmetric. Both masks empty scores 1.0, exactly
    one empty scores 0.0.
    """
    if pred.pixels.shape != gt.pixels.shape:
        raise ValueError(
            f"mask dimensions differ: {pred.pixels.shape} vs {gt.pixels.shape}"
        )
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    pred_empty = pred.is_empty()
    gt_empty = gt.is_empty()
    if pred_empty and gt_empty:
        return 1.0
    if pred_empty or gt_empty:
        return 0.0
    pred_pts = np.argwhere(extract_boundary(pred).pixels).astype(np.float64)
    gt_pts = np.argwhere(extract_boundary(gt).pixels).astype(np.float64)
    precision = _covered_fraction(pred_pts, gt_pts, radius)
    recall = _covered_fraction(gt_pts, pred_pts, radius)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class SequenceScores:
    """Per-frame J and F values for one query plus their arithmetic means."""

    j_frames: tuple[float, ...]
    f_frames: tuple[float, ...]
    j_mean: float
    f_mean: float


def sequence_scores(pred: MaskSequence, gt: MaskSequence, radius: int) -> SequenceScores:
    """Frame-wise region and boundary scores with means over all frames."""
    if pred.pixels.shape != gt.pixels.shape:
        raise ValueError(
            f"sequence shapes differ: {pred.pixels.shape} vs {gt.pixels.shape}"
        )
    j_frames = []
    f_frames = []
    for t in range(gt.frame_count):
        j_frames.append(region_j(pred.frame(t), gt.frame(t)))
        f_frames.append(boundary_f(pred.frame(t), gt.frame(t), radius))
    return SequenceScores(
        j_frames=tuple(j_frames),
        f_frames=tuple(f_frames),
        j_mean=math.fsum(j_frames) / len(j_frames),
        f_mean=math.fsum(f_frames) / len(f_frames),
    )


@dataclass(frozen=True)
class ConfusionCounts:
    """Query-level presence confusion (positive class: target present)."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if not isinstance(other, ConfusionCounts):
            return NotImplemented
        return ConfusionCounts(
            tp=self.tp + other.tp,
            tn=self.tn + other.tn,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _classify_presence(gt_present: bool, pred_present: bool) -> ConfusionCounts:
    if gt_present:
        return ConfusionCounts(tp=1) if pred_present else ConfusionCounts(fn=1)
    return ConfusionCounts(fp=1) if pred_present else ConfusionCounts(tn=1)


def presence_confusion(queries: Sequence[QueryRecord]) -> ConfusionCounts:
    """Count TP/TN/FP/FN presence decisions over a batch of queries."""
    counts = ConfusionCounts()
    for q in queries:
        counts = counts + _classify_presence(indicator(q.gt), indicator(q.pred))
    return counts


def n_acc(counts: ConfusionCounts) -> float:
    """TN/(TN+FP): how often an absent target is declared absent."""
    denom = counts.tn + counts.fp
    if denom == 0:
        raise MetricUndefinedError("n_acc undefined: no queries with absent reference")
    return counts.tn / denom


def t_acc(counts: ConfusionCounts) -> float:
    """TP/(TP+FN): how often a present target is declared present."""
    denom = counts.tp + counts.fn
    if denom == 0:
        raise MetricUndefinedError("t_acc undefined: no queries with present reference")
    return counts.tp / denom


def final_score(jf: float, n: float, t: float) -> float:
    """Challenge ranking score: arithmetic mean of J&F, n_acc, t_acc."""
    for name, v in (("jf", jf), ("n_acc", n), ("t_acc", t)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return (jf + n + t) / 3.0


@dataclass(frozen=True)
class QueryMetrics:
    """Scored result for one query.

    ``j_mean``/``f_mean`` are None when the query is excluded from the J/F
    means (absent reference under the ``exclude`` policy).
    """

    query_id: str
    j_mean: Optional[float]
    f_mean: Optional[float]
    gt_present: bool
    pred_present: bool

    @property
    def jf_mean(self) -> Optional[float]:
        if self.j_mean is None or self.f_mean is None:
            return None
        return (self.j_mean + self.f_mean) / 2.0

    @property
    def confusion(self) -> ConfusionCounts:
        return _classify_presence(self.gt_present, self.pred_present)


@dataclass(frozen=True)
class AggregateReport:
    """One table row: averaged scores, accuracies, and their combination.

    ``n_acc``/``t_acc``/``final`` are None when the respective denominator is
    zero; report writers render those cells as "n/a".
    """

    query_count: int
    scored_count: int
    j: float
    f: float
    jf: float
    counts: ConfusionCounts
    n_acc: Optional[float]
    t_acc: Optional[float]
    final: Optional[float]
    policy: str
    radius: int


def score_query(
    query: QueryRecord, radius: int, policy: str = DEFAULT_POLICY
) -> QueryMetrics:
    """Score one query under the given tolerance radius and empty-GT policy."""
    _check_policy(policy)
    gt_present = indicator(query.gt)
    pred_present = indicator(query.pred)
    if gt_present:
        scores = sequence_scores(query.pred, query.gt, radius)
        j: Optional[float] = scores.j_mean
        f: Optional[float] = scores.f_mean
    elif policy == POLICY_FULL_CREDIT:
        credit = 0.0 if pred_present else 1.0
        j = credit
        f = credit
    else:
        j = None
        f = None
    return QueryMetrics(
        query_id=query.query_id,
        j_mean=j,
        f_mean=f,
        gt_present=gt_present,
        pred_present=pred_present,
    )


def score_queries(
    queries: Sequence[QueryRecord],
    radius: int,
    policy: str = DEFAULT_POLICY,
    mapper: Optional[Callable[..., Iterable[QueryMetrics]]] = None,
) -> list[QueryMetrics]:
    """Score queries independently, optionally through a parallel map.

    ``mapper`` must have the signature of the builtin ``map`` and preserve
    input order (``concurrent.futures.Executor.map`` qualifies).
    """
    _check_policy(policy)
    apply = mapper if mapper is not None else map
    return list(apply(lambda q: score_query(q, radius, policy), queries))


def aggregate_metrics(
    metrics: Sequence[QueryMetrics], policy: str, radius: int
) -> AggregateReport:
    """Reduce per-query metrics into one report row.

    Compensated sums and exact counters make the result independent of the
    order the metrics arrive in.
    """
    _check_policy(policy)
    if len(metrics) == 0:
        raise MetricUndefinedError("cannot aggregate an empty query list")
    scored = [m for m in metrics if m.j_mean is not None]
    if not scored:
        raise MetricUndefinedError(
            "no queries contribute to J/F means under the current policy"
        )
    counts = ConfusionCounts()
    for m in metrics:
        counts = counts + m.confusion
    j = math.fsum(m.j_mean for m in scored) / len(scored)
    f = math.fsum(m.f_mean for m in scored) / len(scored)
    return _assemble_report(
        query_count=len(metrics),
        scored_count=len(scored),
        j=j,
        f=f,
        counts=counts,
        policy=policy,
        radius=radius,
    )


def _assemble_report(
    query_count: int,
    scored_count: int,
    j: float,
    f: float,
    counts: ConfusionCounts,
    policy: str,
    radius: int,
) -> AggregateReport:
    """Shared final arithmetic; both aggregate() and the sweep use this."""
    jf = (j + f) / 2.0
    try:
        n = n_acc(counts)
    except MetricUndefinedError:
        n = None
    try:
        t = t_acc(counts)
    except MetricUndefinedError:
        t = None
    final = final_score(jf, n, t) if n is not None and t is not None else None
    return AggregateReport(
        query_count=query_count,
        scored_count=scored_count,
        j=j,
        f=f,
        jf=jf,
        counts=counts,
        n_acc=n,
        t_acc=t,
        final=final,
        policy=policy,
        radius=radius,
    )


def aggregate(
    queries: Sequence[QueryRecord],
    radius: Optional[int] = None,
    policy: str = DEFAULT_POLICY,
    mapper: Optional[Callable[..., Iterable[QueryMetrics]]] = None,
) -> AggregateReport:
    """Score and reduce a batch of queries into one report row.

    ``radius`` defaults to :func:`default_radius` of the first query's frame
    dimensions. Queries are ordered by query_id internally, so the result
    does not depend on input order.
    """
    _check_policy(policy)
    if len(queries) == 0:
        raise MetricUndefinedError("cannot aggregate an empty query list")
    ordered = sorted(queries, key=lambda q: q.query_id)
    if radius is None:
        radius = default_radius(ordered[0].gt.width, ordered[0].gt.height)
    metrics = score_queries(ordered, radius, policy, mapper=mapper)
    return aggregate_metrics(metrics, policy, radius)
