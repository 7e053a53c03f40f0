"""02_scoring_masks.py

Scoring predicted mask sequences against references: region overlap J,
boundary agreement F, the presence confusion matrix, and the batch
aggregate with its "n/a" cases. Run with
``python3 demos/02_scoring_masks.py``.
"""

import numpy as np

from gateseg import (
    Mask,
    MaskSequence,
    MetricUndefinedError,
    QueryRecord,
    aggregate,
    boundary_f,
    region_j,
    score_query,
    sequence_scores,
)
from gateseg.reports import format_metric


def from_art(rows):
    return Mask(np.array([[c == "#" for c in row] for row in rows]))


# Region similarity J is intersection over union.
gt = from_art([
    "........",
    "..####..",
    "..####..",
    "........",
])
pred = from_art([
    "........",
    "...####.",
    "...####.",
    "........",
])
print("J for a 1 px horizontal miss:", region_j(pred, gt))

# Boundary F compares only boundary pixels, with a tolerance radius.
# At radius 0 the shifted boundary misses badly; at radius 1 every
# boundary pixel finds a partner.
print("F at radius 0:", boundary_f(pred, gt, 0))
print("F at radius 1:", boundary_f(pred, gt, 1))

# Degenerate frames have fixed conventions: two empty masks agree
# perfectly, one empty side scores zero.
empty = Mask.zeros(4, 8)
print("both empty:", region_j(empty, empty), boundary_f(empty, empty, 1))
print("one empty: ", region_j(pred, empty), boundary_f(pred, empty, 1))

# A query pairs a reference sequence with a prediction. Frame-wise
# scores come from sequence_scores; the query-level confusion cell
# depends only on whether each side has any foreground at all.
present = QueryRecord(
    query_id="target-visible",
    gt=MaskSequence.from_masks([gt, gt, gt]),
    pred=MaskSequence.from_masks([pred, pred, gt]),
)
frames = sequence_scores(present.pred, present.gt, radius=1)
print("per-frame J:", frames.j_frames, "mean:", frames.j_mean)
m = score_query(present, radius=1)
print("confusion cell:", m.confusion)

# A hallucination: the reference says the target never appears, the
# prediction paints pixels anyway.
silent = MaskSequence.zeros(3, 4, 8)
halluc = QueryRecord(
    query_id="target-absent",
    gt=silent,
    pred=MaskSequence.from_masks([pred, pred, pred]),
)
print("hallucination cell:", score_query(halluc, radius=1).confusion)

# The batch aggregate averages per-query J and F and reads the two
# presence accuracies off the summed confusion matrix.
report = aggregate([present, halluc], radius=1)
print("batch J&F:", format_metric(report.jf),
      "| N-acc:", format_metric(report.n_acc),
      "| T-acc:", format_metric(report.t_acc),
      "| Final:", format_metric(report.final))

# With no absent-reference queries the negative accuracy has an empty
# denominator. That is reported as undefined, never silently as 0,
# and renders as "n/a".
only_present = aggregate([present], radius=1)
print("N-acc without absent queries:", format_metric(only_present.n_acc))
try:
    aggregate([], radius=1)
except MetricUndefinedError as e:
    print("empty batch:", e)
