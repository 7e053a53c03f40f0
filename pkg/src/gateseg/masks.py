"""Binary mask data model: per-frame grids, sequences, unions, and an RLE codec.

Conventions fixed here so external tools can interoperate:

* grids are strictly binary and stored row-major as ``(height, width)``
  boolean arrays;
* run-length encoding scans row-major and the first run always counts
  background pixels (a leading 0 is emitted when the scan starts on
  foreground);
* 8-bit grayscale ingestion maps any value > 127 to foreground (the PNG
  loaders elsewhere apply this rule via :func:`binarize`).

All values are immutable after construction (the backing arrays are marked
read-only), so masks and sequences are safe to share across workers. Every
operation in this module is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import FormatError

FOREGROUND_GRAY_THRESHOLD = 127


def _freeze(array: np.ndarray) -> np.ndarray:
    """Return a read-only bool view/copy of ``array`` without copying when possible."""
    arr = np.asarray(array)
    if arr.dtype != np.bool_:
        arr = arr.astype(bool)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mask:
    """A single binary mask over a ``height x width`` pixel grid."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _freeze(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"mask grid must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {arr.shape}")
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def zeros(cls, height: int, width: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def is_empty(self) -> bool:
        return not bool(self.pixels.any())

    def foreground_count(self) -> int:
        return int(self.pixels.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"Mask({self.height}x{self.width}, fg={self.foreground_count()})"


@dataclass(frozen=True, eq=False)
class MaskSequence:
    """An ordered stack of equally sized masks, stored as ``(frames, height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = _freeze(self.pixels)
        if arr.ndim != 3:
            raise ValueError(f"mask sequence must be 3-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("mask sequence needs at least one frame")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"mask dimensions must be >= 1, got {arr.shape[1:]}")
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_masks(cls, masks: Sequence[Mask]) -> "MaskSequence":
        if len(masks) == 0:
            raise ValueError("mask sequence needs at least one frame")
        shapes = {m.pixels.shape for m in masks}
        if len(shapes) != 1:
            raise ValueError(f"frames disagree on dimensions: {sorted(shapes)}")
        return cls(np.stack([m.pixels for m in masks]))

    @classmethod
    def zeros(cls, frame_count: int, height: int, width: int) -> "MaskSequence":
        return cls(np.zeros((frame_count, height, width), dtype=bool))

    @property
    def frame_count(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def frames(self) -> tuple[Mask, ...]:
        return tuple(self.frame(t) for t in range(self.frame_count))

    def frame(self, index: int) -> Mask:
        # zero-copy: views of a read-only base are themselves read-only
        return Mask(self.pixels[index])

    def empty_like(self) -> "MaskSequence":
        return MaskSequence.zeros(self.frame_count, self.height, self.width)

    def __len__(self) -> int:
        return self.frame_count

    def __iter__(self) -> Iterator[Mask]:
        return (self.frame(t) for t in range(self.frame_count))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskSequence):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"MaskSequence(T={self.frame_count}, {self.height}x{self.width})"


def binarize(gray: np.ndarray) -> Mask:
    """Map an 8-bit grayscale array to a binary mask (value > 127 is foreground)."""
    return Mask(np.asarray(gray) > FOREGROUND_GRAY_THRESHOLD)


def union_masks(masks: Sequence[Mask]) -> Mask:
    """Pixelwise OR of one or more masks of identical dimensions."""
    if len(masks) == 0:
        raise ValueError("union of an empty mask list is undefined")
    shapes = {m.pixels.shape for m in masks}
    if len(shapes) != 1:
        raise ValueError(f"union requires equal dimensions, got {sorted(shapes)}")
    return Mask(np.logical_or.reduce([m.pixels for m in masks]))


def union_sequences(seqs: Sequence[MaskSequence]) -> MaskSequence:
    """Frame-wise union of one or more sequences with equal length and dimensions."""
    if len(seqs) == 0:
        raise ValueError("union of an empty sequence list is undefined")
    shapes = {s.pixels.shape for s in seqs}
    if len(shapes) != 1:
        raise ValueError(f"union requires equal frame counts and dimensions, got {sorted(shapes)}")
    return MaskSequence(np.logical_or.reduce([s.pixels for s in seqs]))


def indicator(seq: MaskSequence) -> bool:
    """Sequence-level presence: true iff any frame has a foreground pixel."""
    return bool(seq.pixels.any())


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded mask: row-major runs, first run counts background.

    ``counts`` always alternates background/foreground starting from
    background; a leading 0 is the only zero-length run allowed and means
    the scan starts on foreground.
    """

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.width < 1 or self.height < 1:
            raise FormatError(f"RLE dimensions must be >= 1, got {self.width}x{self.height}")
        if any(c < 0 for c in self.counts):
            raise FormatError(f"RLE counts must be non-negative: {list(self.counts)}")
        if any(c == 0 for c in self.counts[1:]):
            raise FormatError(
                "RLE counts contain a zero-length run after the first entry: "
                f"{list(self.counts)}"
            )
        total = sum(self.counts)
        expected = self.width * self.height
        if total != expected:
            raise FormatError(
                f"RLE counts sum to {total}, expected width*height = {expected}"
            )


def rle_encode(mask: Mask) -> RleMask:
    """Encode a mask as row-major background-first run lengths."""
    flat = mask.pixels.ravel()
    change = np.flatnonzero(flat[:-1] != flat[1:]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask(width=mask.width, height=mask.height, counts=tuple(counts))


def rle_decode(rle: RleMask) -> Mask:
    """Decode run lengths back to a mask; inverse of :func:`rle_encode`."""
    values = np.arange(len(rle.counts)) % 2 == 1
    flat = np.repeat(values, rle.counts)
    return Mask(flat.reshape(rle.height, rle.width))


def rle_to_json(rle: RleMask) -> dict:
    """The on-disk object form: ``{"w": int, "h": int, "counts": [int, ...]}``."""
    return {"w": rle.width, "h": rle.height, "counts": list(rle.counts)}


def rle_from_json(obj: dict) -> RleMask:
    if not isinstance(obj, dict):
        raise FormatError(f"RLE object must be a JSON object, got {type(obj).__name__}")
    missing = {"w", "h", "counts"} - set(obj)
    if missing:
        raise FormatError(f"RLE object missing keys: {sorted(missing)}")
    w, h, counts = obj["w"], obj["h"], obj["counts"]
    if not isinstance(w, int) or not isinstance(h, int):
        raise FormatError("RLE 'w' and 'h' must be integers")
    if not isinstance(counts, list) or not all(isinstance(c, int) for c in counts):
        raise FormatError("RLE 'counts' must be a list of integers")
    return RleMask(width=w, height=h, counts=tuple(counts))
