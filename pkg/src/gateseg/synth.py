"""Seeded synthetic scenarios plus brute-force oracles for desk-scale checks.

The generator produces fully labeled query batches: moving shapes for
present targets (reference masks are non-empty in every frame), all-empty
references for absent targets, predictions derived from the reference by
configurable shift/morphology noise, spurious predictions for a configurable
fraction of absent targets, existence probabilities from label-conditioned
clipped normals, and label-separated Gaussian feature clusters.

The oracle functions recompute boundary F, sweeps, and gradients through
deliberately naive independent code paths (per-pixel distance scans, per-tau
full re-aggregation, central finite differences) so the fast kernels can be
cross-checked bit-for-bit or to tight tolerances.

Randomness comes from numpy's default PCG64 generator; the scenario records
the algorithm name and seed in its metadata so it can be regenerated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .gating import (
    ExistenceHead,
    FeatureTensor,
    GatingConfig,
    HeadGradients,
    SweepResult,
    bce_loss,
    gate_query,
)
from .masks import Mask, MaskSequence, indicator
from .metrics import DEFAULT_POLICY, aggregate
from .queries import QueryRecord

RNG_ALGORITHM = "pcg64"

_MORPH_STRUCTURE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one synthetic scenario.

    Present-target references are guaranteed non-empty in every frame, which
    keeps gated scores monotone under the exclude policy.
    """

    seed: int = 0
    num_queries: int = 60
    frames: int = 4
    height: int = 64
    width: int = 64
    frac_absent: float = 0.25
    shape_family: str = "rectangle"  # rectangle | ellipse
    max_shift: int = 2
    max_morph: int = 1
    fp_rate: float = 0.3  # fraction of absent-GT queries given spurious predictions
    prob_mu_present: float = 0.9
    prob_sigma_present: float = 0.05
    prob_mu_absent: float = 0.1
    prob_sigma_absent: float = 0.05
    feat_tokens: int = 4
    feat_dim: int = 16
    feat_sep: float = 4.0  # distance between the two cluster centers
    feat_noise: float = 0.3

    def __post_init__(self):
        if self.num_queries < 1:
            raise ValueError("num_queries must be >= 1")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.height < 8 or self.width < 8:
            raise ValueError(
                f"frame dims must be at least 8x8, got {self.width}x{self.height}"
            )
        for name in ("frac_absent", "fp_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("prob_mu_present", "prob_mu_absent"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("prob_sigma_present", "prob_sigma_absent", "feat_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_shift < 0 or self.max_morph < 0:
            raise ValueError("max_shift and max_morph must be >= 0")
        if self.shape_family not in ("rectangle", "ellipse"):
            raise ValueError(f"unknown shape family {self.shape_family!r}")
        if self.feat_tokens < 1 or self.feat_dim < 1:
            raise ValueError("feature axes must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Generated queries with their bookkeeping labels."""

    config: ScenarioConfig
    queries: tuple[QueryRecord, ...]
    labels: tuple[bool, ...]  # true presence per query, aligned with queries
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.labels) != len(self.queries):
            raise ValueError("labels and queries must align")
        for q, label in zip(self.queries, self.labels):
            if indicator(q.gt) != label:
                raise ValueError(
                    f"bookkeeping label for {q.query_id!r} disagrees with its reference"
                )

    def train_dataset(self) -> list[tuple[FeatureTensor, int]]:
        """(features, presence label) pairs for existence-head training."""
        return [
            (q.features, int(label)) for q, label in zip(self.queries, self.labels)
        ]


SCENARIO_PRESETS: dict[str, ScenarioConfig] = {
    # cleanly separated probabilities and features; spurious predictions on
    # some absent-target queries give gating something to fix
    "separable": ScenarioConfig(),
    # predictions equal references, probabilities nearly deterministic
    "clean": ScenarioConfig(
        max_shift=0,
        max_morph=0,
        fp_rate=0.0,
        prob_mu_present=0.95,
        prob_sigma_present=0.02,
        prob_mu_absent=0.05,
        prob_sigma_absent=0.02,
    ),
    # overlapping probability clusters and heavier mask noise
    "noisy": ScenarioConfig(
        max_shift=4,
        max_morph=2,
        fp_rate=0.4,
        prob_mu_present=0.65,
        prob_sigma_present=0.2,
        prob_mu_absent=0.35,
        prob_sigma_absent=0.2,
        feat_sep=1.0,
        feat_noise=1.5,
    ),
}


def _translate(arr: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift right by dx columns and down by dy rows, filling with background."""
    h, w = arr.shape
    out = np.zeros_like(arr)
    dst_rows = slice(max(dy, 0), min(h, h + dy))
    dst_cols = slice(max(dx, 0), min(w, w + dx))
    src_rows = slice(max(-dy, 0), min(h, h - dy))
    src_cols = slice(max(-dx, 0), min(w, w - dx))
    if dst_rows.start < dst_rows.stop and dst_cols.start < dst_cols.stop:
        out[dst_rows, dst_cols] = arr[src_rows, src_cols]
    return out


def perturb_mask(mask: Mask, shift: tuple[int, int] = (0, 0), morph_delta: int = 0) -> Mask:
    """Translate with zero fill, then dilate (delta>0) or erode (delta<0).

    Morphology uses a 3x3 square structuring element iterated |delta| times;
    pixels beyond the image edge count as background, so erosion eats into
    objects touching the border.
    """
    dx, dy = shift
    out = _translate(mask.pixels, int(dx), int(dy))
    if morph_delta > 0:
        out = ndimage.binary_dilation(out, structure=_MORPH_STRUCTURE, iterations=morph_delta)
    elif morph_delta < 0:
        out = ndimage.binary_erosion(out, structure=_MORPH_STRUCTURE, iterations=-morph_delta)
    return Mask(out)


def _shape_frame(
    family: str, h: int, w: int, cy: int, cx: int, ry: int, rx: int
) -> np.ndarray:
    grid = np.zeros((h, w), dtype=bool)
    if family == "rectangle":
        grid[cy - ry : cy + ry + 1, cx - rx : cx + rx + 1] = True
    else:
        ys, xs = np.ogrid[:h, :w]
        grid = ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
    return grid


def _moving_shape(cfg: ScenarioConfig, rng: np.random.Generator) -> MaskSequence:
    """Reference sequence for a present target: one shape, clamped trajectory.

    Geometry is chosen so the shape stays non-empty in every frame even after
    the configured worst-case shift and erosion are applied to a prediction.
    """
    h, w = cfg.height, cfg.width
    margin = cfg.max_shift + cfg.max_morph + 1
    r_min = cfg.max_morph + 1
    r_max_y = max(r_min, min((h - 2 * margin - 1) // 2, h // 4))
    r_max_x = max(r_min, min((w - 2 * margin - 1) // 2, w // 4))
    lo_y = margin + r_max_y
    hi_y = h - 1 - margin - r_max_y
    lo_x = margin + r_max_x
    hi_x = w - 1 - margin - r_max_x
    if hi_y < lo_y or hi_x < lo_x:
        raise ValueError(
            f"frame dims {w}x{h} leave no room for shapes under "
            f"max_shift={cfg.max_shift}, max_morph={cfg.max_morph}"
        )
    ry = int(rng.integers(r_min, r_max_y + 1))
    rx = int(rng.integers(r_min, r_max_x + 1))
    cy = int(rng.integers(lo_y, hi_y + 1))
    cx = int(rng.integers(lo_x, hi_x + 1))
    vy = int(rng.integers(-2, 3))
    vx = int(rng.integers(-2, 3))
    frames = []
    for t in range(cfg.frames):
        fy = min(max(cy + t * vy, lo_y), hi_y)
        fx = min(max(cx + t * vx, lo_x), hi_x)
        frames.append(Mask(_shape_frame(cfg.shape_family, h, w, fy, fx, ry, rx)))
    return MaskSequence.from_masks(frames)


def _spurious_pred(cfg: ScenarioConfig, rng: np.random.Generator) -> MaskSequence:
    """Small static rectangle in every frame: a hallucinated prediction."""
    h, w = cfg.height, cfg.width
    ry = int(rng.integers(1, max(2, h // 8)))
    rx = int(rng.integers(1, max(2, w // 8)))
    cy = int(rng.integers(ry, h - ry))
    cx = int(rng.integers(rx, w - rx))
    frame = _shape_frame("rectangle", h, w, cy, cx, ry, rx)
    return MaskSequence(np.broadcast_to(frame, (cfg.frames, h, w)).copy())


def _clipped_normal(rng: np.random.Generator, mu: float, sigma: float) -> float:
    return float(np.clip(rng.normal(mu, sigma), 0.0, 1.0))


def gen_scenario(cfg: ScenarioConfig) -> Scenario:
    """Deterministically generate one scenario from its config (seed included).

    Absent targets are an exact count round(num_queries * frac_absent); the
    spurious-prediction count among them is ceil(count * fp_rate), so any
    positive fp_rate yields at least one hallucinated prediction.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_queries
    n_absent = round(n * cfg.frac_absent)
    absent = set(int(i) for i in rng.permutation(n)[:n_absent])
    n_fp = math.ceil(n_absent * cfg.fp_rate) if cfg.fp_rate > 0 else 0
    fp_set = set(
        int(i) for i in rng.permutation(np.array(sorted(absent), dtype=int))[:n_fp]
    )

    center_offset = (cfg.feat_sep / 2.0) / math.sqrt(cfg.feat_dim)
    queries = []
    labels = []
    for i in range(n):
        present = i not in absent
        if present:
            gt = _moving_shape(cfg, rng)
            dx = int(rng.integers(-cfg.max_shift, cfg.max_shift + 1))
            dy = int(rng.integers(-cfg.max_shift, cfg.max_shift + 1))
            delta = int(rng.integers(-cfg.max_morph, cfg.max_morph + 1))
            pred = MaskSequence.from_masks(
                [perturb_mask(m, (dx, dy), delta) for m in gt]
            )
            prob = _clipped_normal(rng, cfg.prob_mu_present, cfg.prob_sigma_present)
        else:
            gt = MaskSequence.zeros(cfg.frames, cfg.height, cfg.width)
            pred = _spurious_pred(cfg, rng) if i in fp_set else gt.empty_like()
            prob = _clipped_normal(rng, cfg.prob_mu_absent, cfg.prob_sigma_absent)
        sign = 1.0 if present else -1.0
        values = sign * center_offset + rng.normal(
            0.0, cfg.feat_noise, size=(cfg.feat_tokens, cfg.frames, cfg.feat_dim)
        )
        queries.append(
            QueryRecord(
                query_id=f"q{i:04d}",
                gt=gt,
                pred=pred,
                existence_prob=prob,
                transcript=f"synthetic referring expression {i}",
                sequence_id=f"seq-{i:04d}",
                features=FeatureTensor(values),
            )
        )
        labels.append(present)
    return Scenario(
        config=cfg,
        queries=tuple(queries),
        labels=tuple(labels),
        metadata={"rng": RNG_ALGORITHM, "seed": cfg.seed},
    )


def _oracle_boundary_points(arr: np.ndarray) -> np.ndarray:
    padded = np.pad(arr, 1, constant_values=False)
    core = padded[1:-1, 1:-1]
    neighbors_fg = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return np.argwhere(core & ~neighbors_fg)


def oracle_boundary_f(pred: Mask, gt: Mask, radius: int) -> float:
    """Naive boundary F: exact all-pairs squared distances, O(Bp x Bg).

    Intended for small masks; this is the reference the fast kernel is
    checked against.
    """
    if pred.pixels.shape != gt.pixels.shape:
        raise ValueError(
            f"mask dimensions differ: {pred.pixels.shape} vs {gt.pixels.shape}"
        )
    pred_empty = pred.is_empty()
    gt_empty = gt.is_empty()
    if pred_empty and gt_empty:
        return 1.0
    if pred_empty or gt_empty:
        return 0.0
    bp = _oracle_boundary_points(pred.pixels)
    bg = _oracle_boundary_points(gt.pixels)
    d2 = ((bp[:, None, :] - bg[None, :, :]) ** 2).sum(axis=2)
    limit = radius * radius
    precision = float((d2.min(axis=1) <= limit).mean())
    recall = float((d2.min(axis=0) <= limit).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def oracle_sweep(
    queries: Sequence[QueryRecord],
    grid: Sequence[float],
    radius: Optional[int] = None,
    policy: str = DEFAULT_POLICY,
) -> SweepResult:
    """Literal sweep: re-gate and fully re-aggregate the batch at every tau."""
    if len(grid) == 0:
        raise ValueError("threshold grid must be non-empty")
    missing = sorted(q.query_id for q in queries if q.existence_prob is None)
    if missing:
        raise ValueError(f"queries missing existence probabilities: {missing}")
    rows = []
    for tau in sorted(grid):
        gated = [gate_query(q, GatingConfig(tau=tau)) for q in queries]
        rows.append((tau, aggregate(gated, radius=radius, policy=policy)))
    return SweepResult(grid=tuple(rows))


def finite_diff_grads(
    head: ExistenceHead, f: FeatureTensor, label: int, epsilon: float = 1e-5
) -> HeadGradients:
    """Central-difference gradients of the BCE loss, parameter by parameter.

    The loss is recomputed through a straight-line reimplementation of the
    forward pass, not through gating.forward.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    pooled = f.values.mean(axis=(0, 1))

    def loss_at(w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: float) -> float:
        hidden = np.maximum(w1 @ pooled + b1, 0.0)
        z = float(w2 @ hidden + b2)
        return bce_loss(z, label)

    w1 = head.w1.copy()
    b1 = head.b1.copy()
    w2 = head.w2.copy()
    b2 = head.b2

    def diff_array(target: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(target)
        for idx in np.ndindex(target.shape):
            original = target[idx]
            target[idx] = original + epsilon
            hi = loss_at(w1, b1, w2, b2)
            target[idx] = original - epsilon
            lo = loss_at(w1, b1, w2, b2)
            target[idx] = original
            grad[idx] = (hi - lo) / (2.0 * epsilon)
        return grad

    gw1 = diff_array(w1)
    gb1 = diff_array(b1)
    gw2 = diff_array(w2)
    gb2 = (loss_at(w1, b1, w2, b2 + epsilon) - loss_at(w1, b1, w2, b2 - epsilon)) / (
        2.0 * epsilon
    )
    return HeadGradients(w1=gw1, b1=gb1, w2=gw2, b2=float(gb2))
