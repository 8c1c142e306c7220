"""Norm-threshold authentication rule and its calibration."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammainc

from .exceptions import ContractError, InsufficientDataError

CALIBRATIONS = ("empirical@FAR", "chi_square@FRR", "manual")


@dataclass(frozen=True)
class DecisionThreshold:
    tau: float
    calibration: str = "manual"
    reference: float = None

    def __post_init__(self):
        if not self.tau >= 0:
            raise ContractError(f"tau must be non-negative, got {self.tau}")
        if self.calibration not in CALIBRATIONS:
            raise ContractError(f"unknown calibration {self.calibration!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def statistic(z, target):
    """Distance of ``z`` from the authorized target mean; lower means more authorized-like."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != target.latent_dim:
        raise ContractError(f"expected latent vectors of length {target.latent_dim}, got {z.shape}")
    return np.linalg.norm(z - target.mu_auth, axis=-1)


def decide(z, target, threshold):
    """'accept' iff statistic(z) <= tau."""
    return "accept" if statistic(z, target) <= threshold.tau else "reject"


def calibrate_empirical(scores, target_far):
    """Largest candidate tau whose FAR on ``scores.unauthorized`` is <= target_far.

    Candidates are the midpoints between adjacent distinct unauthorized scores,
    plus one sentinel below the minimum and one above the maximum.
    """
    if not 0 <= target_far < 1:
        raise ContractError(f"target_far must lie in [0, 1), got {target_far}")
    cands = far_candidates(scores.unauthorized)
    u = np.sort(np.asarray(scores.unauthorized, dtype=np.float64))
    far = np.searchsorted(u, cands, side="right") / len(u)
    ok = np.nonzero(far <= target_far)[0]
    tau = float(cands[ok[-1]])
    if tau < 0:
        raise ContractError("no non-negative threshold reaches the requested FAR")
    return DecisionThreshold(tau, "empirical@FAR", float(target_far))


def far_candidates(unauthorized):
    u = np.unique(np.asarray(unauthorized, dtype=np.float64))
    if u.size == 0:
        raise InsufficientDataError("cannot calibrate without unauthorized scores")
    gap = np.diff(u).min() if u.size > 1 else max(abs(u[0]), 1.0)
    below = u[0] - 0.5 * gap
    if below < 0 <= u[0]:
        below = 0.5 * u[0]
    mids = 0.5 * (u[1:] + u[:-1])
    return np.concatenate(([below], mids, [u[-1] + 0.5 * gap]))


def chi2_quantile(p, df, tol=1e-10):
    """Inverse CDF of the chi-square distribution by bisection on P(df/2, x/2)."""
    if not 0 <= p < 1:
        raise ContractError(f"p must lie in [0, 1), got {p}")
    if p == 0:
        return 0.0
    lo, hi = 0.0, float(df) + 10.0
    while gammainc(df / 2.0, hi / 2.0) < p:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gammainc(df / 2.0, mid / 2.0) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_chi_square(target, target_frr):
    """Threshold giving ``target_frr`` if authorized latents follow the authorized target exactly.

    ||z - mu||^2 / sigma^2 is chi-square with d degrees of freedom under that model.
    """
    if not 0 < target_frr <= 1:
        raise ContractError(f"target_frr must lie in (0, 1], got {target_frr}")
    q = chi2_quantile(1.0 - target_frr, target.latent_dim)
    return DecisionThreshold(target.sigma_auth * float(np.sqrt(q)), "chi_square@FRR", float(target_frr))
