"""01_mask_toolbox.py

A tour of the binary mask data model: building masks, run-length
encoding, boundary extraction, and the resolution-scaled tolerance
radius. Run with ``python3 demos/01_mask_toolbox.py``.
"""

import numpy as np

from gateseg import (
    Mask,
    MaskSequence,
    default_radius,
    extract_boundary,
    rle_decode,
    rle_encode,
    union_masks,
)


def from_art(rows):
    """'#' is foreground, '.' is background."""
    return Mask(np.array([[c == "#" for c in row] for row in rows]))


# A small blob on an 8x8 canvas.
blob = from_art([
    "........",
    "..####..",
    "..####..",
    "..####..",
    "..####..",
    "........",
    "........",
    "........",
])
print("foreground:", blob.foreground_count(), "of", blob.height * blob.width, "pixels")

# Run-length encoding stores counts of alternating background and
# foreground runs in row-major order, background first. The encoding
# is exact: decoding gives back the identical mask.
runs = rle_encode(blob)
print("rle counts:", runs.counts)
print("roundtrip exact:", rle_decode(runs) == blob)

# The boundary is every foreground pixel with a background pixel (or
# the image border) among its 4-neighbours. For the solid blob that
# is the outer ring; the 2x2 interior drops out.
ring = extract_boundary(blob)
print("boundary pixels:", ring.foreground_count(),
      "(interior removed:", blob.foreground_count() - ring.foreground_count(), "pixels)")

# Masks compose with plain numpy on the frozen pixel grids.
shifted = Mask(np.roll(blob.pixels, 2, axis=1))
overlap = Mask(blob.pixels & shifted.pixels)
merged = union_masks([blob, shifted])
print("overlap with a 2 px shift:", overlap.foreground_count(),
      "union:", merged.foreground_count())

# Sequences stack equally sized frames; per-frame access returns
# zero-copy Mask views that still compare by content.
seq = MaskSequence.from_masks([blob, shifted, blob])
print("sequence:", seq.frame_count, "frames of", f"{seq.width}x{seq.height}")
print("frame 0 equals frame 2:", seq.frame(0) == seq.frame(2))

# Boundary matching tolerance defaults to a fixed fraction of the
# image diagonal, never below one pixel.
for w, h in [(8, 8), (100, 100), (640, 480), (1920, 1080)]:
    print(f"default radius at {w}x{h}:", default_radius(w, h))
