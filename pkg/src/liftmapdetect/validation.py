"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np


def as_image_batch(X, name="X"):
    """Coerce (N, H, W) or (N, C, H, W) input to a float32 (N, C, H, W)
    array with finite values in [-1, 1]."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[:, None, :, :]
    if X.ndim != 4 or X.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty (N, H, W) or (N, C, H, W) array, "
                         f"got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    if X.min() < -1.0 or X.max() > 1.0:
        raise ValueError(f"{name} values must lie in [-1, 1]; normalize 8-bit input "
                         "via x / 127.5 - 1")
    return X


def check_binary_mask(mask, height, width):
    mask = np.asarray(mask)
    if mask.shape != (height, width):
        raise ValueError(f"mask shape {mask.shape} does not match image ({height}, {width})")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary (values 0 or 1)")
    return mask.astype(np.uint8)
