"""Existence head, BCE training, threshold gating, and threshold sweeps.

The head is a small MLP over a pooled feature tensor: mean-pool the rank-3
features over tokens and frames, one hidden layer with relu, one output
logit z, probability p = sigmoid(z). A query is gated (its prediction
replaced by an all-empty sequence) when p falls strictly below the threshold
tau; the tie p == tau passes through.

``sweep`` evaluates a whole tau grid in one pass: queries are sorted by
probability once, per-query scores are computed at most twice (ungated and
gated states), and running sums are updated as tau crosses each probability.
Accumulators are exact rationals over the per-query score floats, so every
grid row is bit-identical to independently recomputing ``aggregate`` on the
gated queries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .errors import MetricUndefinedError, TrainingError
from .masks import MaskSequence
from .metrics import (
    DEFAULT_POLICY,
    AggregateReport,
    ConfusionCounts,
    _assemble_report,
    _check_policy,
    default_radius,
    score_query,
)
from .queries import QueryRecord

DEFAULT_TAU = 0.8

_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class FeatureTensor:
    """Rank-3 feature block for one query: tokens x frames x feature dim."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature tensor must be rank 3, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"feature tensor axes must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature tensor contains non-finite values")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]


def pool_features(f: FeatureTensor) -> np.ndarray:
    """Arithmetic mean over the token and frame axes; returns a D-vector."""
    return f.values.mean(axis=(0, 1))


@dataclass(frozen=True)
class ExistenceHead:
    """Parameters of the two-layer existence predictor."""

    w1: np.ndarray  # hidden x input
    b1: np.ndarray  # hidden
    w2: np.ndarray  # hidden
    b2: float
    seed: Optional[int] = None

    def __post_init__(self):
        w1 = _frozen_float(self.w1)
        b1 = _frozen_float(self.b1)
        w2 = _frozen_float(self.w2)
        b2 = float(self.b2)
        if w1.ndim != 2:
            raise ValueError(f"w1 must be a matrix, got shape {w1.shape}")
        if w1.shape[0] < 1:
            raise ValueError("hidden dimension must be >= 1")
        if b1.shape != (w1.shape[0],) or w2.shape != (w1.shape[0],):
            raise ValueError(
                f"parameter shapes disagree: w1 {w1.shape}, b1 {b1.shape}, w2 {w2.shape}"
            )
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
        if not math.isfinite(b2):
            raise ValueError("b2 is non-finite")
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", b2)

    @classmethod
    def initialize(cls, input_dim: int, hidden: int = 64, seed: int = 0) -> "ExistenceHead":
        """Seeded uniform init in +-1/sqrt(fan_in) per layer."""
        if input_dim < 1 or hidden < 1:
            raise ValueError(f"dimensions must be >= 1, got d={input_dim}, h={hidden}")
        rng = np.random.default_rng(seed)
        bound1 = 1.0 / math.sqrt(input_dim)
        bound2 = 1.0 / math.sqrt(hidden)
        return cls(
            w1=rng.uniform(-bound1, bound1, size=(hidden, input_dim)),
            b1=rng.uniform(-bound1, bound1, size=hidden),
            w2=rng.uniform(-bound2, bound2, size=hidden),
            b2=float(rng.uniform(-bound2, bound2)),
            seed=seed,
        )

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]


def _frozen_float(array) -> np.ndarray:
    arr = np.asarray(array, dtype=np.float64)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


def sigmoid(z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Overflow-safe logistic, clamped into the open interval (0, 1)."""
    arr = np.asarray(z, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ez = np.exp(arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    out = np.clip(out, _SIGMOID_LO, _SIGMOID_HI)
    if np.isscalar(z) or getattr(z, "ndim", 1) == 0:
        return float(out)
    return out


def _bce_from_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # log-sum-exp form of -[y log p + (1-y) log(1-p)]; never exponentiates
    # a positive argument
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def bce_loss(logit: float, label: int) -> float:
    """Binary cross-entropy of p = sigmoid(logit) against a 0/1 label.

    Takes the raw logit, not the probability: the loss is evaluated in logit
    space so large |logit| cannot overflow or hit log(0).
    """
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    return float(_bce_from_logits(np.float64(logit), np.float64(label)))


def forward(head: ExistenceHead, f: FeatureTensor) -> tuple[float, float]:
    """Logit and probability for one feature tensor: z, then p = sigmoid(z)."""
    if f.d != head.input_dim:
        raise ValueError(
            f"feature dim {f.d} does not match head input dim {head.input_dim}"
        )
    pooled = pool_features(f)
    hidden = np.maximum(head.w1 @ pooled + head.b1, 0.0)
    z = float(head.w2 @ hidden + head.b2)
    return z, float(sigmoid(z))


@dataclass(frozen=True)
class HeadGradients:
    """Loss gradients, one field per head parameter."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float


def gradients(head: ExistenceHead, f: FeatureTensor, label: int) -> HeadGradients:
    """Analytic gradient of bce_loss(forward(head, f), label).

    The relu subgradient at exactly 0 is taken as 0.
    """
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    if f.d != head.input_dim:
        raise ValueError(
            f"feature dim {f.d} does not match head input dim {head.input_dim}"
        )
    pooled = pool_features(f)
    pre = head.w1 @ pooled + head.b1
    hidden = np.maximum(pre, 0.0)
    z = float(head.w2 @ hidden + head.b2)
    dz = sigmoid(z) - label
    gw2 = dz * hidden
    gb2 = dz
    dhidden = dz * head.w2
    dpre = dhidden * (pre > 0)
    gw1 = np.outer(dpre, pooled)
    gb1 = dpre
    return HeadGradients(w1=gw1, b1=gb1, w2=gw2, b2=float(gb2))


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch gradient-descent settings."""

    lr: float = 0.1
    epochs: int = 500
    seed: int = 0
    hidden: int = 64

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")


@dataclass(frozen=True)
class TrainResult:
    head: ExistenceHead
    losses: tuple[float, ...]  # mean BCE after each epoch's update


Dataset = Sequence[tuple[FeatureTensor, int]]


def _pool_dataset(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    dims = {f.d for f, _ in dataset}
    if len(dims) != 1:
        raise ValueError(f"feature dims disagree across dataset: {sorted(dims)}")
    for _, label in dataset:
        if label not in (0, 1):
            raise ValueError(f"labels must be 0 or 1, got {label!r}")
    x = np.stack([pool_features(f) for f, _ in dataset])
    y = np.array([float(label) for _, label in dataset])
    return x, y


def train(head: Optional[ExistenceHead], dataset: Dataset, config: TrainConfig) -> TrainResult:
    """Deterministic full-batch gradient descent under mean-reduced BCE.

    Pass ``head=None`` to start from :meth:`ExistenceHead.initialize` with
    the config's seed and hidden size. With ``epochs=0`` the head is returned
    unchanged and the loss history is empty.
    """
    x, y = _pool_dataset(dataset)
    if head is None:
        head = ExistenceHead.initialize(x.shape[1], hidden=config.hidden, seed=config.seed)
    elif head.input_dim != x.shape[1]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match head input dim {head.input_dim}"
        )
    if config.epochs == 0:
        return TrainResult(head=head, losses=())

    w1 = head.w1.copy()
    b1 = head.b1.copy()
    w2 = head.w2.copy()
    b2 = head.b2
    batch = len(dataset)
    losses = []
    # divergence shows up as a non-finite loss and is reported as a
    # TrainingError, so the intermediate overflow warnings carry no signal
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            pre = x @ w1.T + b1
            hidden = np.maximum(pre, 0.0)
            z = hidden @ w2 + b2
            dz = (sigmoid(z) - y) / batch
            gw2 = hidden.T @ dz
            gb2 = dz.sum()
            dhidden = np.outer(dz, w2)
            dpre = dhidden * (pre > 0)
            gw1 = dpre.T @ x
            gb1 = dpre.sum(axis=0)

            w1 -= config.lr * gw1
            b1 -= config.lr * gb1
            w2 -= config.lr * gw2
            b2 -= config.lr * gb2

            post = np.maximum(x @ w1.T + b1, 0.0) @ w2 + b2
            loss = float(np.mean(_bce_from_logits(post, y)))
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            losses.append(loss)
    return TrainResult(
        head=ExistenceHead(w1=w1, b1=b1, w2=w2, b2=b2, seed=head.seed),
        losses=tuple(losses),
    )


def dataset_loss(head: ExistenceHead, dataset: Dataset) -> float:
    """Mean BCE of a head over a labeled dataset; no parameters are touched."""
    x, y = _pool_dataset(dataset)
    if head.input_dim != x.shape[1]:
        raise ValueError(
            f"feature dim {x.shape[1]} does not match head input dim {head.input_dim}"
        )
    z = np.maximum(x @ head.w1.T + head.b1, 0.0) @ head.w2 + head.b2
    return float(np.mean(_bce_from_logits(z, y)))


@dataclass(frozen=True)
class GatingConfig:
    """Existence threshold; predictions with p < tau are suppressed."""

    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")


def apply_gate(p: float, cfg: GatingConfig, pred: MaskSequence) -> MaskSequence:
    """Empty the prediction when p < tau; pass through otherwise (tie passes)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"existence probability must lie in [0, 1], got {p}")
    if p < cfg.tau:
        return pred.empty_like()
    return pred


def gate_query(query: QueryRecord, cfg: GatingConfig) -> QueryRecord:
    """Apply the gate to one query record; requires its existence probability."""
    if query.existence_prob is None:
        raise ValueError(f"query {query.query_id!r} carries no existence probability")
    return query.with_pred(apply_gate(query.existence_prob, cfg, query.pred))


@dataclass(frozen=True)
class SweepResult:
    """Reports for an ascending threshold grid."""

    grid: tuple[tuple[float, AggregateReport], ...]

    def __post_init__(self):
        taus = [tau for tau, _ in self.grid]
        if taus != sorted(taus):
            raise ValueError("sweep grid must be sorted ascending by tau")

    def best(self) -> Optional[tuple[float, AggregateReport]]:
        """Grid entry with the highest final score; lowest tau wins ties."""
        best_entry = None
        for tau, report in self.grid:
            if report.final is None:
                continue
            if best_entry is None or report.final > best_entry[1].final:
                best_entry = (tau, report)
        return best_entry


def tau_grid(start: float, stop: float, step: float) -> list[float]:
    """Ascending thresholds start, start+step, ... up to stop inclusive."""
    if step <= 0:
        raise ValueError(f"grid step must be > 0, got {step}")
    if stop < start:
        raise ValueError(f"grid stop {stop} is below start {start}")
    count = int(math.floor((stop - start) / step + 1e-6)) + 1
    values = [round(start + i * step, 10) for i in range(count)]
    return [v for v in values if v <= stop + 1e-9]


def sweep(
    queries: Sequence[QueryRecord],
    grid: Sequence[float],
    radius: Optional[int] = None,
    policy: str = DEFAULT_POLICY,
) -> SweepResult:
    """Aggregate reports for every threshold in ``grid``, in one pass.

    Each row equals ``aggregate`` over the gate-transformed queries exactly:
    per-query scores are floats, but the running sums are kept as exact
    rationals, so converting back to float reproduces the compensated sum
    bit-for-bit at every threshold.
    """
    _check_policy(policy)
    if len(grid) == 0:
        raise ValueError("threshold grid must be non-empty")
    if len(queries) == 0:
        raise MetricUndefinedError("cannot sweep an empty query list")
    missing = sorted(q.query_id for q in queries if q.existence_prob is None)
    if missing:
        raise ValueError(f"queries missing existence probabilities: {missing}")

    ordered = sorted(queries, key=lambda q: q.query_id)
    if radius is None:
        radius = default_radius(ordered[0].gt.width, ordered[0].gt.height)

    ungated = [score_query(q, radius, policy) for q in ordered]
    gated = [
        m if not m.pred_present
        else score_query(q.with_pred(q.pred.empty_like()), radius, policy)
        for q, m in zip(ordered, ungated)
    ]
    if not any(m.j_mean is not None for m in ungated):
        raise MetricUndefinedError(
            "no queries contribute to J/F means under the current policy"
        )
    scored_count = sum(m.j_mean is not None for m in ungated)

    j_sum = Fraction(0)
    f_sum = Fraction(0)
    tp = tn = fp = fn = 0
    for m in ungated:
        if m.j_mean is not None:
            j_sum += Fraction(m.j_mean)
            f_sum += Fraction(m.f_mean)
        c = m.confusion
        tp += c.tp
        tn += c.tn
        fp += c.fp
        fn += c.fn

    order = sorted(range(len(ordered)), key=lambda i: ordered[i].existence_prob)
    rows = []
    cursor = 0
    for tau in sorted(grid):
        while cursor < len(order) and ordered[order[cursor]].existence_prob < tau:
            i = order[cursor]
            old, new = ungated[i], gated[i]
            if old is not new:
                if old.j_mean is not None:
                    j_sum += Fraction(new.j_mean) - Fraction(old.j_mean)
                    f_sum += Fraction(new.f_mean) - Fraction(old.f_mean)
                oc, nc = old.confusion, new.confusion
                tp += nc.tp - oc.tp
                tn += nc.tn - oc.tn
                fp += nc.fp - oc.fp
                fn += nc.fn - oc.fn
            cursor += 1
        rows.append(
            (
                tau,
                _assemble_report(
                    query_count=len(ordered),
                    scored_count=scored_count,
                    j=float(j_sum) / scored_count,
                    f=float(f_sum) / scored_count,
                    counts=ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn),
                    policy=policy,
                    radius=radius,
                ),
            )
        )
    return SweepResult(grid=tuple(rows))
