"""Noise-prediction training loop for the denoising network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .adam import Adam, clip_global_norm
from .autodiff import Tensor
from .schedule import make_linear_schedule


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 1e-3
    timesteps: int = 200
    beta_start: float = 5e-4
    beta_end: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs must be >= 0, batch_size and learning_rate positive")
        if self.timesteps < 2:
            raise ValueError("timesteps must be at least 2")
        if not (0.0 < self.beta_start <= self.beta_end < 1.0):
            raise ValueError("beta range must satisfy 0 < start <= end < 1")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


def train(model, images, config, schedule=None):
    """Minimize the noise-matching loss
    E ||eps - model(sqrt(abar_t) x0 + sqrt(1-abar_t) eps, t)||^2 with t drawn
    uniformly from [1, T] per sample. Returns the mean loss per epoch."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("expected a non-empty (N, C, H, W) image array")
    if schedule is None:
        schedule = make_linear_schedule(config.timesteps, config.beta_start, config.beta_end)

    rng = np.random.default_rng(config.seed)
    opt = Adam(model.named_params(), lr=config.learning_rate)
    n = images.shape[0]
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            x0 = images[order[lo:lo + config.batch_size]]
            t = rng.integers(1, schedule.timesteps + 1, size=x0.shape[0])
            eps = rng.standard_normal(x0.shape, dtype=np.float32)
            coef_sig = np.sqrt(schedule.alpha_bar[t - 1]).astype(np.float32)
            coef_noise = np.sqrt(1.0 - schedule.alpha_bar[t - 1]).astype(np.float32)
            x_t = coef_sig[:, None, None, None] * x0 + coef_noise[:, None, None, None] * eps

            pred = model.forward(Tensor(x_t), t)
            diff = pred - Tensor(eps)
            loss = ad.mean(ad.mul(diff, diff))
            if not np.isfinite(loss.data):
                raise TrainingDiverged(epoch, bi)
            opt.zero_grad()
            loss.backward()
            clip_global_norm(opt.params, 1.0)
            opt.step()
            epoch_losses.append(float(loss.data))
        losses.append(float(np.mean(epoch_losses)))
    return losses
