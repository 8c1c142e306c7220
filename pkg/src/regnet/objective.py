"""Target Gaussians in latent space and the KL losses that pull batches onto them."""

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError, DegenerateBatchError, NumericOverflowError

VAR_FLOOR = 1e-6


@dataclass(frozen=True)
class TargetSpec:
    """Isotropic targets N(mu_auth * 1, sigma_auth^2 I) and N(mu_unauth * 1, sigma_unauth^2 I)."""

    latent_dim: int = 3
    mu_auth: float = 0.0
    sigma_auth: float = 1.0
    mu_unauth: float = 40.0
    sigma_unauth: float = 1.0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ContractError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if not self.mu_auth < self.mu_unauth:
            raise ContractError(f"need mu_auth < mu_unauth, got {self.mu_auth} >= {self.mu_unauth}")
        if self.sigma_auth <= 0 or self.sigma_unauth <= 0:
            raise ContractError("target standard deviations must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class BatchStats:
    mean: ad.Tensor
    var: ad.Tensor
    count: int


def batch_stats(Z):
    """Column means and population variances of an encoded batch, still differentiable."""
    Z = Z if isinstance(Z, ad.Tensor) else ad.Tensor(Z)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise DegenerateBatchError(f"batch statistics need a (b >= 2, d) batch, got shape {Z.shape}")
    return BatchStats(ad.mean(Z, axis=0), ad.var(Z, axis=0), Z.shape[0])


def kl_to_target(stats, mu_T, sigma_T, var_floor=VAR_FLOOR):
    """KL( N(mean, diag(var)) || N(mu_T * 1, sigma_T^2 I) ) in closed form.

    ``var`` is floored at ``var_floor`` inside the log and trace terms.
    """
    if stats.count < 2:
        raise DegenerateBatchError(f"KL needs at least 2 samples, got {stats.count}")
    if sigma_T <= 0:
        raise ContractError(f"sigma_T must be positive, got {sigma_T}")
    d = stats.mean.shape[0]
    s2 = float(sigma_T) ** 2
    v = ad.maximum(stats.var, var_floor)
    try:
        trace = ad.sum(v) * (1.0 / s2)
        mahal = ad.sum(ad.square(stats.mean - float(mu_T))) * (1.0 / s2)
        kl = 0.5 * (d * np.log(s2) - ad.sum(ad.log(v)) - d + trace + mahal)
    except NumericOverflowError as exc:
        raise NumericOverflowError(f"KL loss overflowed: {exc}") from exc
    return kl


def combined_loss(Z_a, Z_u, target):
    """Equal-weight sum of the authorized and unauthorized KL terms."""
    parts = []
    for name, Z, mu, sigma in (
        ("authorized", Z_a, target.mu_auth, target.sigma_auth),
        ("unauthorized", Z_u, target.mu_unauth, target.sigma_unauth),
    ):
        try:
            stats = batch_stats(Z)
        except DegenerateBatchError as exc:
            raise DegenerateBatchError(f"{name} batch: {exc}") from exc
        parts.append(kl_to_target(stats, mu, sigma))
    return 0.5 * parts[0] + 0.5 * parts[1]
