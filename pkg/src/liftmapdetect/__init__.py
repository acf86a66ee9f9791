"""Lift-Map-Detect: unsupervised out-of-distribution detection by masking
images, inpainting them with a small diffusion model trained on in-domain
data, and scoring the reconstruction distance."""

from .detector import DetectorConfig, ScoreReport, ood_score, score_dataset
from .estimator import LiftMapDetector
from .masks import MaskSpec, get_mask
from .metrics import FeatureExtractor, feature_distance, mse, roc_auc, ssim_distance
from .model import EpsilonModel, load_checkpoint, save_checkpoint
from .sampling import diffuse_to, denoise_step, inpaint, sample
from .schedule import NoiseSchedule, make_linear_schedule
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "DetectorConfig", "ScoreReport", "ood_score", "score_dataset",
    "LiftMapDetector", "MaskSpec", "get_mask",
    "FeatureExtractor", "feature_distance", "mse", "roc_auc", "ssim_distance",
    "EpsilonModel", "load_checkpoint", "save_checkpoint",
    "diffuse_to", "denoise_step", "inpaint", "sample",
    "NoiseSchedule", "make_linear_schedule", "TrainConfig", "train",
]
