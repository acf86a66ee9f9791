"""Reconstruction distances (MSE, SSIM distance, random-feature cosine
distance) and the ROC-AUC evaluator."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .autodiff import conv2d_nhwc_raw

SSIM_WINDOW = 7
# Value range is [-1, 1], i.e. dynamic range L = 2.
_SSIM_C1 = (0.01 * 2.0) ** 2
_SSIM_C2 = (0.03 * 2.0) ** 2

METRIC_NAMES = ("mse", "ssim_distance", "feature_distance")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _check_pair(a, b)
    return float(np.mean(np.square(a.astype(np.float64) - b.astype(np.float64))))


def _ssim_channel(a, b):
    h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        wins_a = a.reshape(1, -1)
        wins_b = b.reshape(1, -1)
    else:
        wins_a = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW)).reshape(-1, SSIM_WINDOW ** 2)
        wins_b = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW)).reshape(-1, SSIM_WINDOW ** 2)
    mu_a = wins_a.mean(axis=1)
    mu_b = wins_b.mean(axis=1)
    var_a = (wins_a ** 2).mean(axis=1) - mu_a ** 2
    var_b = (wins_b ** 2).mean(axis=1) - mu_b ** 2
    cov = (wins_a * wins_b).mean(axis=1) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    return float(np.mean(num / den))


def ssim_distance(a, b):
    """1 - mean local SSIM over uniform 7x7 windows (per channel, then
    averaged). Images smaller than the window fall back to one global
    window. Range [0, 2]; 0 for identical images."""
    a, b = _check_pair(a, b)
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W) images, got shape {a.shape}")
    ssim = np.mean([_ssim_channel(ac, bc) for ac, bc in zip(a, b)])
    return float(1.0 - ssim)


def _mean_pool2_nhwc(x):
    b, h, w, c = x.shape
    x = x[:, : h - h % 2, : w - w % 2, :]
    return x.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


class FeatureExtractor:
    """Frozen random-weight conv stack used as a perceptual-feature proxy.

    Three stages of stride-1 'same' 3x3 convolution + SiLU with 2x2 mean
    pooling between stages. Weights are drawn once from a seeded normal
    (scaled by 1/sqrt(fan_in)) and never change.
    """

    def __init__(self, channels=1, widths=(8, 16, 32), seed=7):
        self.channels = int(channels)
        self.widths = tuple(int(w) for w in widths)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.weights = []
        self._wmats = []
        prev = self.channels
        for w in self.widths:
            scale = 1.0 / np.sqrt(prev * 9)
            kernel = rng.normal(0.0, scale, (w, prev, 3, 3)).astype(np.float32)
            self.weights.append(kernel)
            self._wmats.append(np.ascontiguousarray(
                kernel.transpose(2, 3, 1, 0).reshape(-1, w)))
            prev = w

    def features(self, x):
        """Concatenated flattened stage activations for a batch (B, C, H, W)."""
        x = np.asarray(x, dtype=np.float32)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        stages = []
        h = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        for i, wmat in enumerate(self._wmats):
            if i > 0:
                h = _mean_pool2_nhwc(h)
            h = conv2d_nhwc_raw(h, wmat, 3)
            h = h / (1.0 + np.exp(-h))
            stages.append(np.ascontiguousarray(h.transpose(0, 3, 1, 2)).reshape(h.shape[0], -1))
        out = np.concatenate(stages, axis=1)
        return out[0] if squeeze else out


def feature_distance(a, b, extractor):
    """Cosine distance between the extractor's feature vectors; in [0, 2]."""
    a, b = _check_pair(a, b)
    fa = extractor.features(a).astype(np.float64)
    fb = extractor.features(b).astype(np.float64)
    na = np.linalg.norm(fa)
    nb = np.linalg.norm(fb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm feature vector; cosine distance undefined")
    return float(1.0 - np.dot(fa, fb) / (na * nb))


def make_metric(kind, channels=1, feature_seed=7):
    """Distance callable d(a, b) for one of the named metric kinds."""
    if kind == "mse":
        return mse
    if kind == "ssim_distance":
        return ssim_distance
    if kind == "feature_distance":
        extractor = FeatureExtractor(channels=channels, seed=feature_seed)
        return lambda a, b: feature_distance(a, b, extractor)
    raise ValueError(f"unknown metric {kind!r}; choose from {METRIC_NAMES}")


def roc_auc(scores_in, scores_out):
    """Mann-Whitney statistic with midrank tie handling: the fraction of
    (out, in) pairs with score_out > score_in, ties counted as half.

    The exact rational statistic is rounded to the nearest multiple of
    2**-53 (ties to even), which makes roc_auc(a, b) == 1 - roc_auc(b, a)
    hold exactly even in the presence of ties.
    """
    s_in = np.asarray(scores_in, dtype=np.float64)
    s_out = np.asarray(scores_out, dtype=np.float64)
    if s_in.size == 0 or s_out.size == 0:
        raise ValueError("both score lists must be non-empty")
    n, m = s_in.size, s_out.size
    ranks = rankdata(np.concatenate([s_in, s_out]))
    u2 = int(round(2.0 * ranks[n:].sum() - m * (m + 1)))  # 2 * Mann-Whitney U
    exact = Fraction(u2, 2 * n * m)
    return float(round(exact * 2 ** 53)) / 2.0 ** 53
