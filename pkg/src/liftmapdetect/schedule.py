"""Linear-beta noise schedule tables for the forward/reverse processes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step tables beta, alpha = 1-beta, alpha_bar (cumulative product)
    and sigma = sqrt(beta), indexed 1..T via the step accessors."""

    timesteps: int
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape != (self.timesteps,):
            raise ValueError(f"beta table must have length {self.timesteps}")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise ValueError("beta values must lie strictly in (0, 1)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", 1.0 - beta)
        object.__setattr__(self, "alpha_bar", np.cumprod(1.0 - beta))
        object.__setattr__(self, "sigma", np.sqrt(beta))

    # Step-indexed accessors, t in 1..T.
    def beta_at(self, t):
        return self.beta[t - 1]

    def alpha_at(self, t):
        return self.alpha[t - 1]

    def alpha_bar_at(self, t):
        return self.alpha_bar[t - 1]

    def sigma_at(self, t):
        return self.sigma[t - 1]


def make_linear_schedule(timesteps, beta_start=5e-4, beta_end=0.1):
    """Beta linear in t from beta_start to beta_end inclusive, T >= 2 steps."""
    if timesteps < 2:
        raise ValueError("schedule needs at least 2 steps")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"beta range must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, timesteps, dtype=np.float64)
    return NoiseSchedule(timesteps=timesteps, beta=beta)
