"""Scikit-learn style front end: fit a diffusion model on in-domain images,
then score new images by repeated lift/map reconstruction distance."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .detector import DetectorConfig, score_dataset
from .masks import MaskSpec
from .model import EpsilonModel
from .schedule import make_linear_schedule
from .training import TrainConfig, train
from .validation import as_image_batch


class LiftMapDetector(BaseEstimator):
    """Unsupervised OOD detector backed by diffusion inpainting.

    fit(X) trains a small noise-prediction network on in-domain images;
    score_samples(X) returns the median reconstruction distance over
    repeated masked-inpainting attempts. Higher score = more likely OOD
    (note this is the opposite sign of sklearn's outlier detectors;
    decision_function flips the sign for compatibility).
    """

    def __init__(self, epochs=150, batch_size=16, learning_rate=1e-3,
                 timesteps=200, beta_start=5e-4, beta_end=0.1,
                 widths=(16, 32, 32, 16), temb_dim=32,
                 attempts=10, mask_variant="alternating_checkerboard",
                 mask_grid=8, metric="feature_distance",
                 lift_mode="mask_inpaint", lift_step=None,
                 random_state=0, workers=1):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.timesteps = timesteps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.widths = widths
        self.temb_dim = temb_dim
        self.attempts = attempts
        self.mask_variant = mask_variant
        self.mask_grid = mask_grid
        self.metric = metric
        self.lift_mode = lift_mode
        self.lift_step = lift_step
        self.random_state = random_state
        self.workers = workers

    def _detector_config(self):
        return DetectorConfig(
            attempts=self.attempts,
            mask=MaskSpec(variant=self.mask_variant, grid_size=self.mask_grid),
            metric=self.metric,
            lift_mode=self.lift_mode,
            lift_step=self.lift_step,
        )

    def fit(self, X, y=None):
        X = as_image_batch(X)
        config = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, timesteps=self.timesteps,
            beta_start=self.beta_start, beta_end=self.beta_end,
            seed=self.random_state)
        self.model_ = EpsilonModel(channels=X.shape[1], widths=self.widths,
                                   temb_dim=self.temb_dim, seed=self.random_state)
        self.schedule_ = make_linear_schedule(self.timesteps, self.beta_start,
                                              self.beta_end)
        self.loss_trace_ = train(self.model_, X, config, self.schedule_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before scoring")

    def score_samples(self, X):
        """OOD score per image; higher = more likely out-of-domain."""
        self._check_fitted()
        X = as_image_batch(X)
        reports, _ = score_dataset(
            X, ["unknown"] * X.shape[0], self.model_, self.schedule_,
            self._detector_config(), seed=self.random_state, workers=self.workers)
        return np.asarray([r.score for r in reports])

    def decision_function(self, X):
        """Sklearn outlier convention: higher = more in-domain."""
        return -self.score_samples(X)
