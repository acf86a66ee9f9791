"""Lift masks: checkerboards, the centered square and random patch masks.

Convention throughout: mask value 1 = observed/kept, 0 = region to inpaint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALTERNATING_CHECKERBOARD = "alternating_checkerboard"
FIXED_CHECKERBOARD = "fixed_checkerboard"
CENTER = "center"
RANDOM_PATCH = "random_patch"

VARIANTS = (ALTERNATING_CHECKERBOARD, FIXED_CHECKERBOARD, CENTER, RANDOM_PATCH)


@dataclass(frozen=True)
class MaskSpec:
    variant: str = ALTERNATING_CHECKERBOARD
    grid_size: int = 8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown mask variant {self.variant!r}; choose from {VARIANTS}")
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")


def _band_edges(extent, n):
    # Band b spans [floor(b*extent/n), floor((b+1)*extent/n)); bands differ
    # in size by at most one pixel when n does not divide extent.
    return [(b * extent) // n for b in range(n + 1)]


def _patch_index(extent, n):
    idx = np.empty(extent, dtype=np.int64)
    edges = _band_edges(extent, n)
    for b in range(n):
        idx[edges[b]:edges[b + 1]] = b
    return idx


def get_mask(spec, attempt_index, height, width, rng=None):
    """Binary (height, width) mask for one reconstruction attempt.

    Checkerboards keep patch (i, j) iff (i + j + a) is even, with a equal to
    the attempt index for the alternating variant and 0 for the fixed one,
    so consecutive alternating attempts are exact complements. The center
    variant zeroes a centered square of one quarter the image area. The
    random patch variant inpaints ceil(n^2/2) patches drawn without
    replacement, freshly per attempt.
    """
    if attempt_index < 0:
        raise ValueError("attempt_index must be >= 0")
    if height < 1 or width < 1:
        raise ValueError("mask dims must be positive")

    if spec.variant == CENTER:
        side = int(np.floor(np.sqrt(height * width) / 2.0))
        mask = np.ones((height, width), dtype=np.uint8)
        top = (height - side) // 2
        left = (width - side) // 2
        mask[top:top + side, left:left + side] = 0
        return mask

    n = spec.grid_size
    if n > min(height, width):
        raise ValueError(f"grid size {n} exceeds min image dim {min(height, width)}")
    if n < 2:
        # A 1x1 grid would make the whole mask a single patch, producing a
        # degenerate all-kept or all-inpainted mask.
        raise ValueError("checkerboard and random patch masks need grid_size >= 2")
    rows = _patch_index(height, n)
    cols = _patch_index(width, n)

    if spec.variant in (ALTERNATING_CHECKERBOARD, FIXED_CHECKERBOARD):
        a = attempt_index if spec.variant == ALTERNATING_CHECKERBOARD else 0
        keep = (rows[:, None] + cols[None, :] + a) % 2 == 0
        return keep.astype(np.uint8)

    # random_patch
    if rng is None:
        raise ValueError("random_patch masks need an rng")
    k = -(-(n * n) // 2)  # ceil(n^2 / 2) patches to inpaint
    chosen = rng.choice(n * n, size=k, replace=False)
    grid = np.ones(n * n, dtype=np.uint8)
    grid[chosen] = 0
    return grid.reshape(n, n)[rows[:, None], cols[None, :]]


def coverage_union(spec, attempts, height, width, seed=0):
    """Fraction of pixels inpainted (mask value 0) in at least one of the
    first `attempts` attempts."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    rng = np.random.default_rng(seed)
    hit = np.zeros((height, width), dtype=bool)
    for a in range(attempts):
        hit |= get_mask(spec, a, height, width, rng) == 0
    return float(hit.mean())


def mask_to_pgm(mask, path):
    """Export a mask for inspection: P5, maxval 255, kept pixels white."""
    mask = np.asarray(mask, dtype=np.uint8)
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((mask * 255).tobytes())
