"""In-memory query records: one referring expression with its mask sequences.

A record pairs the reference (ground-truth) sequence with the predicted
sequence for a single expression, plus optional sidecar data used by the
gating stack: the predicted existence probability, the expression text, and
the pooled-feature tensor the existence head consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional

from .masks import MaskSequence

if TYPE_CHECKING:
    from .gating import FeatureTensor


@dataclass(frozen=True)
class QueryRecord:
    """One expression: reference masks, predicted masks, optional extras."""

    query_id: str
    gt: MaskSequence
    pred: MaskSequence
    existence_prob: Optional[float] = None
    transcript: Optional[str] = None
    sequence_id: Optional[str] = None
    features: Optional["FeatureTensor"] = None

    def __post_init__(self):
        if not isinstance(self.query_id, str) or not self.query_id:
            raise ValueError("query_id must be a non-empty string")
        if self.gt.pixels.shape != self.pred.pixels.shape:
            raise ValueError(
                f"query {self.query_id!r}: prediction shape {self.pred.pixels.shape} "
                f"does not match reference shape {self.gt.pixels.shape}"
            )
        if self.existence_prob is not None:
            p = float(self.existence_prob)
            if not 0.0 <= p <= 1.0:
                raise ValueError(
                    f"query {self.query_id!r}: existence probability {p} outside [0, 1]"
                )
            object.__setattr__(self, "existence_prob", p)

    def with_pred(self, pred: MaskSequence) -> "QueryRecord":
        """Copy of this record with the prediction replaced."""
        return replace(self, pred=pred)
