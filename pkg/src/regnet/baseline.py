"""Conventional comparison network: the same encoder trunk plus a sigmoid head."""

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from . import encoder
from .exceptions import DimensionError

HEAD_WEIGHT = "classifier.weight"
HEAD_BIAS = "classifier.bias"


def init_head(latent_dim, seed):
    rng = np.random.default_rng(seed)
    return {
        HEAD_BIAS: ad.Tensor(np.zeros(1), requires_grad=True),
        HEAD_WEIGHT: ad.Tensor(rng.normal(0.0, np.sqrt(2.0 / latent_dim), size=(latent_dim, 1)), requires_grad=True),
    }


def bce_loss(logits, labels):
    """Mean sigmoid cross-entropy; ``labels`` may be soft targets in [0, 1].

    Uses max(l, 0) - y*l + log1p(exp(-|l|)), which is exact for large |l|.
    """
    logits = logits if isinstance(logits, ad.Tensor) else ad.Tensor(logits)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if logits.size != y.size:
        raise DimensionError(f"bce_loss: {logits.size} logits but {y.size} labels")
    l = logits.data.ravel()
    per = np.maximum(l, 0.0) - y * l + np.log1p(np.exp(-np.abs(l)))
    n = y.size

    def bw(g):
        return ((g * (expit(l) - y) / n).reshape(logits.shape),)

    return ad.make_op(per.mean(), (logits,), bw, "bce")


def logits(params, config, batch):
    z = encoder.forward(params, config, batch)
    return z @ params[HEAD_WEIGHT] + params[HEAD_BIAS]


def _logits_array(params, config, images):
    z = encoder.encode(params, config, images)
    w = np.asarray(getattr(params[HEAD_WEIGHT], "data", params[HEAD_WEIGHT]))
    b = np.asarray(getattr(params[HEAD_BIAS], "data", params[HEAD_BIAS]))
    return (z @ w + b).ravel()


def baseline_score(params, config, images):
    """Sigmoid output per image: the classifier's probability of 'authorized'."""
    return expit(_logits_array(params, config, images))


def complement_score(params, config, images):
    """1 - sigmoid, computed as sigmoid(-logit); lower means more authorized-like."""
    return expit(-_logits_array(params, config, images))
