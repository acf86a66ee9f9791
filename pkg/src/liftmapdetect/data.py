"""Dataset ingestion (IDX image files), synthetic generators and PGM export.

The pipeline is grayscale: images are (N, 1, H, W) float32 in [-1, 1],
normalized from 8-bit sources via x / 127.5 - 1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803

FAMILIES = ("stripes", "checker_texture", "discs", "gaussian_noise")


@dataclass
class Dataset:
    images: np.ndarray  # (N, 1, H, W) float32 in [-1, 1]
    source: str = "unknown"
    normalization: str = "x/127.5-1"
    raw: np.ndarray | None = field(default=None, repr=False)  # (N, H, W) uint8

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float32)
        if images.ndim != 4:
            raise ValueError("images must be a (N, C, H, W) array")
        if images.size and (images.min() < -1.0 or images.max() > 1.0):
            raise ValueError("image values must lie in [-1, 1]")
        self.images = images

    def __len__(self):
        return self.images.shape[0]


def normalize_bytes(raw):
    return (np.asarray(raw, dtype=np.float32) / np.float32(127.5)) - np.float32(1.0)


def denormalize_to_bytes(images):
    v = (np.asarray(images, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def read_idx(path):
    """Parse an IDX image file: big-endian magic 0x00000803, three 32-bit
    dimension sizes, then row-major unsigned bytes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise ValueError(f"{path}: too short for an IDX header ({len(blob)} bytes)")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic != IDX_IMAGE_MAGIC:
        raise ValueError(
            f"{path}: magic 0x{magic:08x} is not an IDX image file "
            f"(expected 0x{IDX_IMAGE_MAGIC:08x})")
    if len(blob) < 16:
        raise ValueError(f"{path}: truncated dimension header ({len(blob)} bytes)")
    count, rows, cols = struct.unpack(">III", blob[4:16])
    expected = 16 + count * rows * cols
    if len(blob) != expected:
        raise ValueError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(blob)}")
    raw = np.frombuffer(blob[16:], dtype=np.uint8).reshape(count, rows, cols)
    return Dataset(images=normalize_bytes(raw)[:, None, :, :], source=str(path), raw=raw)


def write_idx(dataset, path):
    """Serialize back to IDX. Uses the original bytes when present so a
    read/write round trip is byte-identical."""
    if dataset.raw is not None:
        raw = dataset.raw
    else:
        if dataset.images.shape[1] != 1:
            raise ValueError("IDX export is single-channel only")
        raw = denormalize_to_bytes(dataset.images[:, 0])
    count, rows, cols = raw.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols))
        fh.write(np.ascontiguousarray(raw, dtype=np.uint8).tobytes())


@dataclass(frozen=True)
class SyntheticSpec:
    family: str
    side: int = 16
    count: int = 200
    seed: int = 0
    orientation: str = "horizontal"  # stripes
    period: int = 4                  # stripes
    cell: int = 2                    # checker_texture
    disc_count: int = 3              # discs
    radius_range: tuple = (2, 4)     # discs

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.side < 8:
            raise ValueError("side must be >= 8")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def _stripes(spec, rng):
    coords = np.arange(spec.side)
    images = np.empty((spec.count, spec.side, spec.side), dtype=np.float32)
    for i in range(spec.count):
        phase = int(rng.integers(spec.period))
        band = np.where(((coords + phase) % spec.period) < spec.period // 2, 1.0, -1.0)
        if spec.orientation == "horizontal":
            images[i] = band[:, None]
        else:
            images[i] = band[None, :]
    return images


def _checker_texture(spec, rng):
    r = np.arange(spec.side)
    images = np.empty((spec.count, spec.side, spec.side), dtype=np.float32)
    for i in range(spec.count):
        pr, pc = rng.integers(spec.cell, size=2)
        sign = 1.0 if rng.integers(2) == 0 else -1.0
        cells = ((r[:, None] + pr) // spec.cell + (r[None, :] + pc) // spec.cell) % 2
        images[i] = sign * np.where(cells == 0, 1.0, -1.0)
    return images


def _discs(spec, rng):
    r = np.arange(spec.side)
    yy, xx = np.meshgrid(r, r, indexing="ij")
    images = np.full((spec.count, spec.side, spec.side), -1.0, dtype=np.float32)
    lo, hi = spec.radius_range
    for i in range(spec.count):
        for _ in range(spec.disc_count):
            cy, cx = rng.uniform(0, spec.side, size=2)
            rad = rng.uniform(lo, hi)
            images[i][(yy - cy) ** 2 + (xx - cx) ** 2 <= rad ** 2] = 1.0
    return images


def _gaussian_noise(spec, rng):
    raw = rng.normal(0.0, 0.5, size=(spec.count, spec.side, spec.side))
    return np.clip(raw, -1.0, 1.0).astype(np.float32)


def generate(spec):
    """Deterministic synthetic dataset for the given family and seed."""
    rng = np.random.default_rng(spec.seed)
    maker = {"stripes": _stripes, "checker_texture": _checker_texture,
             "discs": _discs, "gaussian_noise": _gaussian_noise}[spec.family]
    images = maker(spec, rng)
    return Dataset(images=images[:, None, :, :],
                   source=f"synthetic:{spec.family}(seed={spec.seed})")


def write_pgm_grid(images, columns, path):
    """Tile single-channel images row-major into a binary P5 PGM with
    1-pixel white separators; values map by (x + 1) * 127.5, rounded half
    up."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim == 4:
        if images.shape[1] != 1:
            raise ValueError("PGM export is single-channel only")
        images = images[:, 0]
    if images.ndim != 3:
        raise ValueError("expected (N, H, W) or (N, 1, H, W) images")
    n, h, w = images.shape
    columns = max(1, min(columns, n))
    rows = -(-n // columns)
    grid = np.full((rows * h + rows - 1, columns * w + columns - 1), 255, dtype=np.uint8)
    tiles = denormalize_to_bytes(images)
    for i in range(n):
        r, c = divmod(i, columns)
        grid[r * (h + 1):r * (h + 1) + h, c * (w + 1):c * (w + 1) + w] = tiles[i]
    gh, gw = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{gw} {gh}\n255\n".encode("ascii"))
        fh.write(grid.tobytes())
