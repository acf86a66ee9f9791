"""Forward diffusion, ancestral sampling and mask-conditioned inpainting.

All stochastic entry points take explicit numpy Generators. The batched
variants draw each element's noise from that element's own generator, so a
result depends only on (its stream, the model, the schedule) and never on
which other elements share the batch.
"""

from __future__ import annotations

import numpy as np


def _f32(v):
    return np.float32(v)


def diffuse_to(x0, t, noise, schedule):
    """Closed-form marginal x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) noise.
    t = 0 returns x0 unchanged."""
    x0 = np.asarray(x0, dtype=np.float32)
    noise = np.asarray(noise, dtype=np.float32)
    if noise.shape != x0.shape:
        raise ValueError(f"noise shape {noise.shape} does not match image shape {x0.shape}")
    if not 0 <= t <= schedule.timesteps:
        raise ValueError(f"step {t} outside [0, {schedule.timesteps}]")
    if t == 0:
        return x0.copy()
    abar = schedule.alpha_bar_at(t)
    return _f32(np.sqrt(abar)) * x0 + _f32(np.sqrt(1.0 - abar)) * noise


def _posterior_mean(x_t, t, eps_hat, schedule):
    beta = schedule.beta_at(t)
    coef = _f32(beta / np.sqrt(1.0 - schedule.alpha_bar_at(t)))
    return (x_t - coef * eps_hat) * _f32(1.0 / np.sqrt(schedule.alpha_at(t)))


def denoise_step(x_t, t, model, schedule, rng):
    """One reverse step x_t -> x_{t-1}; the sampling noise is suppressed at
    the final step t = 1."""
    if not 1 <= t <= schedule.timesteps:
        raise ValueError(f"step {t} outside [1, {schedule.timesteps}]")
    x_t = np.asarray(x_t, dtype=np.float32)
    eps_hat = model.predict(x_t, t)
    mu = _posterior_mean(x_t, t, eps_hat, schedule)
    if t == 1:
        return mu
    z = rng.standard_normal(x_t.shape, dtype=np.float32)
    return mu + _f32(schedule.sigma_at(t)) * z


def _stack_normal(rngs, shape):
    return np.stack([r.standard_normal(shape, dtype=np.float32) for r in rngs])


def _check_mask(mask):
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary (values 0 or 1)")
    return mask.astype(np.float32)


def inpaint_batch(x_orig, masks, model, schedule, rngs):
    """Algorithm: walk t = T..1; at each step diffuse the original to t-1
    with fresh noise, denoise the running estimate once, then composite the
    (diffused) original back over the observed region. The final composite
    uses the undiffused original, so observed pixels come back bit-exact.

    x_orig: (B, C, H, W); masks: (B, H, W) with 1 = keep; rngs: one
    Generator per element.
    """
    x_orig = np.asarray(x_orig, dtype=np.float32)
    b, c, h, w = x_orig.shape
    masks = _check_mask(masks)
    if masks.shape != (b, h, w):
        raise ValueError(f"mask batch shape {masks.shape} does not match images {(b, h, w)}")
    if len(rngs) != b:
        raise ValueError("need one rng per batch element")
    m = masks[:, None, :, :]
    inv = 1.0 - m

    x = _stack_normal(rngs, (c, h, w))
    for t in range(schedule.timesteps, 0, -1):
        if t >= 2:
            noise = _stack_normal(rngs, (c, h, w))
            abar = schedule.alpha_bar_at(t - 1)
            x_orig_t = _f32(np.sqrt(abar)) * x_orig + _f32(np.sqrt(1.0 - abar)) * noise
        else:
            x_orig_t = x_orig
        eps_hat = model.predict(x, t)
        mu = _posterior_mean(x, t, eps_hat, schedule)
        if t > 1:
            z = _stack_normal(rngs, (c, h, w))
            x = mu + _f32(schedule.sigma_at(t)) * z
        else:
            x = mu
        x = x_orig_t * m + x * inv
    return x


def inpaint(x_orig, mask, model, schedule, rng):
    """Single-image inpainting; see inpaint_batch for the step structure."""
    x_orig = np.asarray(x_orig, dtype=np.float32)
    return inpaint_batch(x_orig[None], np.asarray(mask)[None], model, schedule, [rng])[0]


def sample(model, schedule, shape, rng):
    """Unconditional ancestral sampling, clamped to [-1, 1]. Implemented as
    inpainting with an all-zero mask so the two share one rng protocol."""
    c, h, w = shape
    zeros = np.zeros((1, c, h, w), dtype=np.float32)
    out = inpaint_batch(zeros, np.zeros((1, h, w), dtype=np.float32),
                        model, schedule, [rng])[0]
    return np.clip(out, -1.0, 1.0)


def denoise_lift_batch(x_orig, t_star, model, schedule, rngs):
    """Alternative lift: diffuse each image to step t_star with fresh noise,
    then denoise back down to step 0."""
    if not 1 <= t_star <= schedule.timesteps:
        raise ValueError(f"lift step {t_star} outside [1, {schedule.timesteps}]")
    x_orig = np.asarray(x_orig, dtype=np.float32)
    b, c, h, w = x_orig.shape
    if len(rngs) != b:
        raise ValueError("need one rng per batch element")
    noise = _stack_normal(rngs, (c, h, w))
    abar = schedule.alpha_bar_at(t_star)
    x = _f32(np.sqrt(abar)) * x_orig + _f32(np.sqrt(1.0 - abar)) * noise
    for t in range(t_star, 0, -1):
        eps_hat = model.predict(x, t)
        mu = _posterior_mean(x, t, eps_hat, schedule)
        if t > 1:
            z = _stack_normal(rngs, (c, h, w))
            x = mu + _f32(schedule.sigma_at(t)) * z
        else:
            x = mu
    return x
