"""scikit-learn compatible wrappers around enrollment and authentication.

``X`` is an array of images shaped (n, c, h, w), or (n, n_features) for the
mlp encoder; ``y`` is 1 for the authorized user and 0 for everyone else.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import baseline
from .data import Dataset, LabeledSample
from .decision import calibrate_empirical
from .encoder import BlockSpec, EncoderConfig
from .exceptions import ContractError
from .metrics import ScoreSet
from .model import load_model, save_model
from .objective import TargetSpec
from .trainer import TrainConfig, enroll


def check_images(X):
    """Validate ``X`` and return it as a float64 (n, c, h, w) array."""
    X = check_array(X, allow_nd=True, dtype=np.float64)
    if X.ndim == 2:
        return X.reshape(X.shape[0], 1, 1, X.shape[1])
    if X.ndim == 3:
        return X[:, None]
    if X.ndim != 4:
        raise ValueError(f"expected 2-, 3- or 4-d input, got {X.ndim}-d")
    return X


class RegNetAuthenticator(TransformerMixin, ClassifierMixin, BaseEstimator):
    """Maps authorized inputs near ``mu_auth * 1`` and everyone else near ``mu_unauth * 1``.

    ``transform`` returns latent vectors, ``score_samples`` the distance from
    the authorized target mean (lower = authorized), and ``predict`` applies the
    calibrated threshold.  ``decision_function`` is ``tau - score`` so positive
    values mean "accept", following scikit-learn's sign convention.
    """

    _objective = "regnet_kl"

    def __init__(
        self,
        latent_dim=3,
        arch_kind="conv_residual",
        block_filters=(8, 16, 32, 64),
        block_strides=(2, 2, 2, 2),
        residual=True,
        mlp_widths=(),
        mu_auth=0.0,
        sigma_auth=1.0,
        mu_unauth=40.0,
        sigma_unauth=1.0,
        batch_size=100,
        steps=2000,
        learning_rate=1e-3,
        mixup_alpha=0.2,
        auth_fraction=0.5,
        crop_size=None,
        calib_fraction=0.2,
        target_far=1e-2,
        random_state=0,
    ):
        self.latent_dim = latent_dim
        self.arch_kind = arch_kind
        self.block_filters = block_filters
        self.block_strides = block_strides
        self.residual = residual
        self.mlp_widths = mlp_widths
        self.mu_auth = mu_auth
        self.sigma_auth = sigma_auth
        self.mu_unauth = mu_unauth
        self.sigma_unauth = sigma_unauth
        self.batch_size = batch_size
        self.steps = steps
        self.learning_rate = learning_rate
        self.mixup_alpha = mixup_alpha
        self.auth_fraction = auth_fraction
        self.crop_size = crop_size
        self.calib_fraction = calib_fraction
        self.target_far = target_far
        self.random_state = random_state

    def _configs(self, image_shape):
        c, h, w = image_shape
        if self.crop_size is not None:
            h, w = self.crop_size
        enc = EncoderConfig(
            input_shape=(c, h, w),
            blocks=tuple(BlockSpec(f, s, self.residual) for f, s in zip(self.block_filters, self.block_strides)),
            latent_dim=self.latent_dim,
            arch_kind=self.arch_kind,
            mlp_widths=self.mlp_widths,
        )
        target = TargetSpec(self.latent_dim, self.mu_auth, self.sigma_auth, self.mu_unauth, self.sigma_unauth)
        train = TrainConfig(
            batch_size=self.batch_size,
            steps=self.steps,
            learning_rate=self.learning_rate,
            mixup_alpha=self.mixup_alpha,
            auth_fraction=self.auth_fraction,
            seed=self.random_state,
            crop_size=self.crop_size,
            calib_fraction=self.calib_fraction,
            target_far=self.target_far,
        )
        return enc, target, train

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float64)
        check_classification_targets(y)
        labels = np.unique(y)
        if not set(labels.tolist()) <= {0, 1} or len(labels) != 2:
            raise ValueError(f"y must contain both labels 0 and 1, got {labels.tolist()}")
        X = check_images(X)
        enc, target, train = self._configs(X.shape[1:])
        samples = [LabeledSample(x, int(lab), int(lab)) for x, lab in zip(X, y)]
        self.artifact_ = enroll(Dataset(samples, "train"), enc, target, train, objective=self._objective)
        self._set_fitted_attrs(X.shape)
        return self

    def _set_fitted_attrs(self, shape):
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(shape[1:]))
        self.threshold_ = self.artifact_.threshold.tau
        self.telemetry_ = self.artifact_.telemetry

    def transform(self, X):
        check_is_fitted(self, "artifact_")
        return self.artifact_.latent(check_images(X))

    def score_samples(self, X):
        check_is_fitted(self, "artifact_")
        return self.artifact_.scores(check_images(X))

    def decision_function(self, X):
        return self.threshold_ - self.score_samples(X)

    def predict(self, X):
        return (self.score_samples(X) <= self.threshold_).astype(int)

    def calibrate(self, X_unauthorized, target_far=None):
        """Re-derive the threshold from impostor samples at ``target_far``."""
        scores = ScoreSet(np.zeros(0), self.score_samples(X_unauthorized))
        far = self.target_far if target_far is None else target_far
        self.artifact_.threshold = calibrate_empirical(scores, far)
        self.threshold_ = self.artifact_.threshold.tau
        return self

    def save(self, path):
        check_is_fitted(self, "artifact_")
        save_model(self.artifact_, path)

    @classmethod
    def load(cls, path):
        artifact = load_model(path)
        expected = "baseline_bce" if cls is EncoderClassifier else "regnet_kl"
        if artifact.objective != expected:
            raise ContractError(f"{path} holds a {artifact.objective} model, not {expected}")
        cfg, target = artifact.encoder_config, artifact.target
        est = cls(
            latent_dim=cfg.latent_dim,
            arch_kind=cfg.arch_kind,
            block_filters=tuple(b.filters for b in cfg.blocks),
            block_strides=tuple(b.stride for b in cfg.blocks),
            residual=all(b.residual for b in cfg.blocks),
            mlp_widths=cfg.mlp_widths,
            mu_auth=target.mu_auth,
            sigma_auth=target.sigma_auth,
            mu_unauth=target.mu_unauth,
            sigma_unauth=target.sigma_unauth,
            crop_size=artifact.crop,
        )
        est.artifact_ = artifact
        est._set_fitted_attrs((1,) + cfg.input_shape)
        return est


class EncoderClassifier(RegNetAuthenticator):
    """The same encoder trained with sigmoid cross-entropy through a linear head.

    ``score_samples`` is 1 - P(authorized) so it shares the lower-is-authorized
    convention with :class:`RegNetAuthenticator`.
    """

    _objective = "baseline_bce"

    def predict_proba(self, X):
        check_is_fitted(self, "artifact_")
        images = self.artifact_.prepare(check_images(X))
        p = baseline.baseline_score(self.artifact_.params, self.artifact_.encoder_config, images)
        return np.column_stack([1.0 - p, p])

    def logits(self, X):
        check_is_fitted(self, "artifact_")
        z = self.transform(X)
        params = self.artifact_.params
        return (z @ params[baseline.HEAD_WEIGHT] + params[baseline.HEAD_BIAS]).ravel()


__all__ = ["EncoderClassifier", "RegNetAuthenticator", "check_images"]
