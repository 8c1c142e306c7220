"""Biometric authentication by mapping inputs onto regularized latent Gaussians."""

from .decision import DecisionThreshold, calibrate_chi_square, calibrate_empirical, decide, statistic
from .encoder import BlockSpec, EncoderConfig, desk_config
from .estimator import EncoderClassifier, RegNetAuthenticator
from .metrics import ScoreSet, accuracy_at_eer, eer, gar_at_far, roc
from .model import ModelArtifact, load_model, save_model
from .objective import TargetSpec, batch_stats, combined_loss, kl_to_target
from .trainer import TrainConfig, enroll

__version__ = "0.1.0"

__all__ = [
    "BlockSpec",
    "DecisionThreshold",
    "EncoderClassifier",
    "EncoderConfig",
    "ModelArtifact",
    "RegNetAuthenticator",
    "ScoreSet",
    "TargetSpec",
    "TrainConfig",
    "accuracy_at_eer",
    "batch_stats",
    "calibrate_chi_square",
    "calibrate_empirical",
    "combined_loss",
    "decide",
    "desk_config",
    "eer",
    "enroll",
    "gar_at_far",
    "kl_to_target",
    "load_model",
    "roc",
    "save_model",
    "statistic",
]
