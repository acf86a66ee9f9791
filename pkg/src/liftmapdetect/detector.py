"""Repeated lift/map scoring: per-attempt reconstruction distances with
median aggregation, plus the diffuse/denoise lifting alternative.

Every (image, attempt) pair gets its own rng stream derived from
(seed, image index, attempt index), so scores do not depend on batching,
chunking or worker scheduling. Batches are cut into fixed-size chunks whose
boundaries depend only on the element list, never on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics as metrics_mod
from .masks import MaskSpec, get_mask
from .sampling import denoise_lift_batch, inpaint_batch

MASK_INPAINT = "mask_inpaint"
DIFFUSE_DENOISE = "diffuse_denoise"


@dataclass
class DetectorConfig:
    attempts: int = 10
    mask: MaskSpec = field(default_factory=MaskSpec)
    metric: str = "feature_distance"
    aggregation: str = "median"
    lift_mode: str = MASK_INPAINT
    lift_step: int | None = None  # diffuse_denoise only; None means T // 2

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.metric not in metrics_mod.METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.aggregation != "median":
            raise ValueError("median is the only supported aggregation")
        if self.lift_mode not in (MASK_INPAINT, DIFFUSE_DENOISE):
            raise ValueError(f"unknown lift mode {self.lift_mode!r}")
        if self.lift_step is not None and self.lift_step < 1:
            raise ValueError("lift step must be >= 1 (0 would be no lift at all)")


@dataclass
class ScoreReport:
    image_index: int
    label: str
    distances: list[float]
    score: float


class ScoringError(RuntimeError):
    def __init__(self, image_index, attempt, cause):
        super().__init__(f"scoring image {image_index}, attempt {attempt}: {cause}")
        self.__cause__ = cause


def median_score(distances):
    """Median with the even-length convention: mean of the two middle order
    statistics."""
    return float(np.median(np.asarray(distances, dtype=np.float64)))


def _attempt_rng(seed, image_index, attempt):
    return np.random.default_rng([int(seed), int(image_index), int(attempt)])


def _mask_rng(seed, image_index, attempt):
    # Separate stream so mask sampling never shifts the inpainting draws.
    return np.random.default_rng([int(seed), int(image_index), int(attempt), 1])


def _resolve_lift_step(config, schedule):
    step = config.lift_step if config.lift_step is not None else schedule.timesteps // 2
    if not 1 <= step <= schedule.timesteps:
        raise ValueError(f"lift step {step} outside [1, {schedule.timesteps}]")
    return step


def _reconstruct_chunk(images, elements, model, schedule, config, seed):
    """Reconstruct one chunk of (position, stream_index, attempt) elements."""
    x = images[[pos for pos, _, _ in elements]]
    rngs = [_attempt_rng(seed, idx, att) for _, idx, att in elements]
    if config.lift_mode == MASK_INPAINT:
        h, w = x.shape[2], x.shape[3]
        masks = np.stack([
            get_mask(config.mask, att, h, w, _mask_rng(seed, idx, att))
            for _, idx, att in elements
        ])
        return inpaint_batch(x, masks, model, schedule, rngs)
    step = _resolve_lift_step(config, schedule)
    return denoise_lift_batch(x, step, model, schedule, rngs)


def _score_images(images, model, schedule, config, seed, metric_kinds,
                  chunk_size=256, workers=1, indices=None):
    """Distance table per metric kind: {kind: (n_images, attempts) array}.

    `indices` are the per-image rng stream indices; they default to the
    positional ones so solo and dataset scoring of image i agree.
    """
    images = np.asarray(images, dtype=np.float32)
    n = images.shape[0]
    r = config.attempts
    if indices is None:
        indices = range(n)
    elements = [(pos, idx, att)
                for pos, idx in enumerate(indices) for att in range(r)]
    chunks = [elements[lo:lo + chunk_size] for lo in range(0, len(elements), chunk_size)]
    dists = {kind: np.empty((n, r), dtype=np.float64) for kind in metric_kinds}
    fns = {kind: metrics_mod.make_metric(kind, channels=images.shape[1])
           for kind in metric_kinds}

    def run_chunk(chunk):
        recon = _reconstruct_chunk(images, chunk, model, schedule, config, seed)
        for (pos, idx, att), rec in zip(chunk, recon):
            for kind, fn in fns.items():
                try:
                    dists[kind][pos, att] = fn(images[pos], rec)
                except Exception as exc:
                    raise ScoringError(idx, att, exc) from exc

    if workers <= 1:
        for chunk in chunks:
            run_chunk(chunk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(run_chunk, c) for c in chunks]:
                future.result()
    return dists


def ood_score(x, model, schedule, config, seed=0, image_index=0):
    """Score a single image: r lift/map attempts, per-attempt distances and
    their median."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    dists = _score_images(x, model, schedule, config, seed, [config.metric],
                          indices=[image_index])
    row = dists[config.metric][0]
    return ScoreReport(image_index=image_index, label="unknown",
                       distances=[float(d) for d in row], score=median_score(row))


def denoise_lift_score(x, model, schedule, config, seed=0, image_index=0):
    """ood_score for the diffuse/denoise lifting alternative."""
    if config.lift_mode != DIFFUSE_DENOISE:
        raise ValueError("config.lift_mode must be diffuse_denoise")
    return ood_score(x, model, schedule, config, seed=seed, image_index=image_index)


def score_dataset(images, labels, model, schedule, config, seed=0,
                  chunk_size=256, workers=1, metric_kinds=None):
    """Score every image and compute ROC-AUC over the in/out label groups.

    Returns (reports, auc) where reports follow input order and auc is the
    dict {kind: value} for each scored metric kind, or None when the labels
    do not contain both an 'in' and an 'out' group.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("expected a non-empty (N, C, H, W) image array")
    labels = list(labels)
    if len(labels) != images.shape[0]:
        raise ValueError("need one label per image")
    kinds = list(metric_kinds) if metric_kinds else [config.metric]
    dists = _score_images(images, model, schedule, config, seed, kinds,
                          chunk_size=chunk_size, workers=workers)

    reports = {}
    for kind in kinds:
        reports[kind] = [
            ScoreReport(image_index=i, label=labels[i],
                        distances=[float(d) for d in dists[kind][i]],
                        score=median_score(dists[kind][i]))
            for i in range(images.shape[0])
        ]
    in_idx = [i for i, lab in enumerate(labels) if lab == "in"]
    out_idx = [i for i, lab in enumerate(labels) if lab == "out"]
    auc = None
    if in_idx and out_idx:
        auc = {
            kind: metrics_mod.roc_auc(
                [reports[kind][i].score for i in in_idx],
                [reports[kind][i].score for i in out_idx])
            for kind in kinds
        }
    if metric_kinds is None:
        only = kinds[0]
        return reports[only], (auc[only] if auc is not None else None)
    return reports, auc


def reports_to_csv(reports, path):
    """CSV schema: image_index,label,score,d_1,...,d_r with 6 significant
    digits per float."""
    r = len(reports[0].distances) if reports else 0
    lines = ["image_index,label,score," + ",".join(f"d_{i + 1}" for i in range(r))]
    for rep in reports:
        if len(rep.distances) != r:
            raise ValueError("reports disagree on attempt count")
        vals = ",".join(f"{d:.6g}" for d in rep.distances)
        lines.append(f"{rep.image_index},{rep.label},{rep.score:.6g},{vals}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def reports_from_csv(path):
    reports = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:3] != ["image_index", "label", "score"]:
            raise ValueError(f"{path}: unexpected header {header[:3]}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                reports.append(ScoreReport(
                    image_index=int(parts[0]), label=parts[1],
                    score=float(parts[2]),
                    distances=[float(p) for p in parts[3:]]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}: malformed row at line {lineno}") from None
    return reports
