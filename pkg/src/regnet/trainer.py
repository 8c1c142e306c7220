"""Enrollment: batch assembly, mixup, Adam, and the training loop."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from . import baseline, encoder
from .data import Dataset, random_crop
from .decision import calibrate_empirical
from .exceptions import (
    ContractError,
    DegenerateDatasetError,
    NumericOverflowError,
    TrainingDivergedError,
)
from .metrics import ScoreSet
from .model import OBJECTIVES, ModelArtifact
from .objective import combined_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    steps: int = 2000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mixup_alpha: float = 0.2
    auth_fraction: float = 0.5
    seed: int = 0
    crop_size: tuple = None
    calib_fraction: float = 0.2
    target_far: float = 1e-2
    telemetry_every: int = 50

    def __post_init__(self):
        if self.crop_size is not None:
            object.__setattr__(self, "crop_size", tuple(int(c) for c in self.crop_size))
        if self.batch_size < 1 or self.steps < 0 or self.learning_rate <= 0:
            raise ContractError("batch_size and learning_rate must be positive, steps non-negative")
        if not 0 < self.auth_fraction < 1:
            raise ContractError(f"auth_fraction must lie in (0, 1), got {self.auth_fraction}")
        n_a, n_u = self.class_counts()
        if n_a < 2 or n_u < 2:
            raise ContractError(f"batch of {self.batch_size} at auth_fraction {self.auth_fraction} leaves a class with < 2 samples")
        if self.mixup_alpha < 0:
            raise ContractError("mixup_alpha must be non-negative")

    def class_counts(self):
        n_a = int(math.ceil(self.batch_size * self.auth_fraction))
        return n_a, self.batch_size - n_a

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def _class_pools(train_set):
    if isinstance(train_set, Dataset):
        images = train_set.images
        auth, unauth = train_set.class_indices()
        return images[auth], images[unauth]
    return train_set


def assemble_batch(train_set, config, rng):
    """Draw authorized and unauthorized images uniformly with replacement.

    ``train_set`` is a Dataset or a precomputed ``(auth_images, unauth_images)``
    pair.  Images are randomly cropped when ``config.crop_size`` is set.
    """
    auth, unauth = _class_pools(train_set)
    if len(auth) < 2 or len(unauth) < 2:
        raise DegenerateDatasetError(
            f"training needs >= 2 samples per class, got {len(auth)} authorized and {len(unauth)} unauthorized"
        )
    n_a, n_u = config.class_counts()
    X_a = auth[rng.integers(0, len(auth), n_a)]
    X_u = unauth[rng.integers(0, len(unauth), n_u)]
    if config.crop_size is not None:
        X_a = np.stack([random_crop(x, config.crop_size, rng) for x in X_a])
        X_u = np.stack([random_crop(x, config.crop_size, rng) for x in X_u])
    return X_a, X_u


def mix_pair(x_pos, x_neg, lam):
    """Convex combination and its pile: authorized iff lam > 0.5."""
    return lam * x_pos + (1.0 - lam) * x_neg, bool(lam > 0.5)


def mixup(X_a, X_u, alpha, rng):
    """Refill both piles with random positive/negative mixtures, lam ~ Beta(alpha, alpha).

    Each mixture goes to the authorized pile when lam > 0.5 and to the
    unauthorized pile otherwise; drawing continues until both piles hold their
    original counts.  ``alpha == 0`` returns the inputs untouched.
    """
    if alpha == 0:
        return X_a, X_u
    n_a, n_u = len(X_a), len(X_u)
    piles = ([], [])  # (unauthorized, authorized)
    need = (n_u, n_a)
    while len(piles[0]) < n_u or len(piles[1]) < n_a:
        n = n_a + n_u
        i = rng.integers(0, n_a, n)
        j = rng.integers(0, n_u, n)
        lam = rng.beta(alpha, alpha, n)
        for k in range(n):
            x, is_auth = mix_pair(X_a[i[k]], X_u[j[k]], lam[k])
            if len(piles[is_auth]) < need[is_auth]:
                piles[is_auth].append(x)
    return np.stack(piles[1]), np.stack(piles[0])


def mixup_soft(X_a, X_u, alpha, rng):
    """Standard mixup with soft labels, for the cross-entropy baseline."""
    X = np.concatenate([X_a, X_u])
    y = np.concatenate([np.ones(len(X_a)), np.zeros(len(X_u))])
    if alpha == 0:
        return X, y
    perm = rng.permutation(len(X))
    lam = rng.beta(alpha, alpha, len(X))
    shape = (-1,) + (1,) * (X.ndim - 1)
    return lam.reshape(shape) * X + (1 - lam.reshape(shape)) * X[perm], lam * y + (1 - lam) * y[perm]


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name in params:
        if grads.get(name) is None:
            raise ContractError(f"adam_step: no gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data = p.data - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)
    return params, state


def _split_calibration(train_set, fraction, rng):
    auth, unauth = train_set.class_indices()
    cal, keep = [], []
    for idx in (auth, unauth):
        idx = rng.permutation(idx)
        n = int(round(fraction * len(idx)))
        cal += idx[:n].tolist()
        keep += idx[n:].tolist()
    return train_set.subset(sorted(keep), "train"), train_set.subset(sorted(cal), "calibration")


def _check_input_shape(train_set, enc_cfg, train_cfg):
    c, h, w = train_set.samples[0].image.shape
    expected = (c,) + (train_cfg.crop_size if train_cfg.crop_size is not None else (h, w))
    if tuple(enc_cfg.input_shape) != expected:
        raise ContractError(f"encoder input_shape {enc_cfg.input_shape} does not match training inputs {expected}")


def enroll(train_set, enc_cfg, target, train_cfg, objective="regnet_kl", calib_set=None, on_telemetry=None):
    """Train an encoder for one authorized identity and return the model artifact.

    Without ``calib_set``, ``train_cfg.calib_fraction`` of each training class
    is held out for threshold calibration and never used for gradient steps.
    ``on_telemetry`` receives a dict every ``telemetry_every`` steps.
    """
    if objective not in OBJECTIVES:
        raise ContractError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if enc_cfg.latent_dim != target.latent_dim:
        raise ContractError("encoder latent_dim and target latent_dim differ")
    init_seq, head_seq, split_seq, batch_seq = np.random.SeedSequence(train_cfg.seed).spawn(4)
    if calib_set is None:
        train_set, calib_set = _split_calibration(train_set, train_cfg.calib_fraction, np.random.default_rng(split_seq))
    _check_input_shape(train_set, enc_cfg, train_cfg)
    pools = _class_pools(train_set)

    params = encoder.init_params(enc_cfg, init_seq)
    if objective == "baseline_bce":
        params.update(baseline.init_head(enc_cfg.latent_dim, head_seq))
    params = dict(sorted(params.items()))
    rng = np.random.default_rng(batch_seq)
    state = AdamState()
    telemetry = []
    final_loss = None
    n_a, _ = train_cfg.class_counts()

    for step in range(train_cfg.steps):
        X_a, X_u = assemble_batch(pools, train_cfg, rng)
        try:
            with np.errstate(over="ignore", invalid="ignore"):  # non-finite values raise below
                if objective == "regnet_kl":
                    X_a, X_u = mixup(X_a, X_u, train_cfg.mixup_alpha, rng)
                    Z = encoder.forward(params, enc_cfg, np.concatenate([X_a, X_u]))
                    Z_a, Z_u = ad.rows(Z, 0, n_a), ad.rows(Z, n_a, Z.shape[0])
                    loss = combined_loss(Z_a, Z_u, target)
                else:
                    X, y = mixup_soft(X_a, X_u, train_cfg.mixup_alpha, rng)
                    Z = encoder.forward(params, enc_cfg, X)
                    loss = baseline.bce_loss(Z @ params[baseline.HEAD_WEIGHT] + params[baseline.HEAD_BIAS], y)
                for p in params.values():
                    p.zero_grad()
                ad.backward(loss)
        except NumericOverflowError as exc:
            raise TrainingDivergedError(f"training diverged at step {step}: {exc}", telemetry) from exc
        final_loss = loss.item()
        if step % train_cfg.telemetry_every == 0 or step == train_cfg.steps - 1:
            norms = np.linalg.norm(Z.data, axis=1)
            record = {
                "step": step,
                "loss": final_loss,
                "auth_norm": float(norms[:n_a].mean()),
                "unauth_norm": float(norms[n_a:].mean()),
            }
            telemetry.append(record)
            log.debug(format_telemetry(record))
            if on_telemetry is not None:
                on_telemetry(record)
        adam_step(params, {k: p.grad for k, p in params.items()}, state, train_cfg)
        if not all(np.all(np.isfinite(p.data)) for p in params.values()):
            raise TrainingDivergedError(f"parameters became non-finite at step {step}", telemetry)

    artifact = ModelArtifact(
        target=target,
        encoder_config=enc_cfg,
        objective=objective,
        params={k: p.data.copy() for k, p in params.items()},
        threshold=None,
        fingerprint={"seed": train_cfg.seed, "steps": train_cfg.steps, "final_loss": final_loss},
        crop=train_cfg.crop_size,
        telemetry=telemetry,
    )
    calib_unauth = [s.image for s in calib_set.samples if s.label == 0]
    calib_auth = [s.image for s in calib_set.samples if s.label == 1]
    scores = ScoreSet(
        artifact.scores(np.stack(calib_auth)) if calib_auth else [],
        artifact.scores(np.stack(calib_unauth)) if calib_unauth else [],
    )
    artifact.threshold = calibrate_empirical(scores, train_cfg.target_far)
    return artifact


def format_telemetry(record):
    return (
        f"step={record['step']} loss={record['loss']!r} "
        f"auth_norm={record['auth_norm']!r} unauth_norm={record['unauth_norm']!r}"
    )
