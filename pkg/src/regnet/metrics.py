"""Verification metrics over score sets.

Scores follow the "lower = more authorized-like" convention of the norm
threshold: a sample is accepted at threshold tau iff its score <= tau.  All
rates are fractions in [0, 1]; percentages only appear in reports.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, InsufficientDataError


@dataclass
class ScoreSet:
    authorized: np.ndarray
    unauthorized: np.ndarray

    def __post_init__(self):
        self.authorized = np.asarray(self.authorized, dtype=np.float64).ravel()
        self.unauthorized = np.asarray(self.unauthorized, dtype=np.float64).ravel()
        for name in ("authorized", "unauthorized"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ContractError(f"{name} scores must be finite")

    def require_both(self):
        if self.authorized.size == 0 or self.unauthorized.size == 0:
            raise InsufficientDataError(
                f"need both classes, got {self.authorized.size} authorized and "
                f"{self.unauthorized.size} unauthorized scores"
            )


@dataclass
class RocCurve:
    """Operating points ordered by increasing tau, including +-inf sentinels."""

    tau: np.ndarray
    far: np.ndarray
    frr: np.ndarray

    @property
    def gar(self):
        return 1.0 - self.frr

    def rows(self):
        return list(zip(self.tau.tolist(), self.far.tolist(), self.frr.tolist(), self.gar.tolist()))


def far_frr(scores, taus):
    """FAR and FRR evaluated at each threshold in ``taus``."""
    a = np.sort(scores.authorized)
    u = np.sort(scores.unauthorized)
    taus = np.asarray(taus, dtype=np.float64)
    far = np.searchsorted(u, taus, side="right") / u.size
    frr = 1.0 - np.searchsorted(a, taus, side="right") / a.size
    return far, frr


def roc(scores):
    scores.require_both()
    distinct = np.unique(np.concatenate([scores.authorized, scores.unauthorized]))
    taus = np.concatenate(([-np.inf], 0.5 * (distinct[1:] + distinct[:-1]), [np.inf]))
    far, frr = far_frr(scores, taus)
    return RocCurve(taus, far, frr)


def _lower_hull(curve):
    """Indices of ROC points on the lower-left convex hull in (FAR, FRR) space."""
    far, frr = curve.far, curve.frr
    # one point per FAR value: the largest tau, which has the smallest FRR
    last = np.nonzero(np.append(far[1:] != far[:-1], True))[0]
    hull = []
    for i in last:
        while len(hull) >= 2:
            o, p = hull[-2], hull[-1]
            cross = (far[p] - far[o]) * (frr[i] - frr[o]) - (frr[p] - frr[o]) * (far[i] - far[o])
            if cross >= 0:  # keep collinear vertices so tau interpolates locally
                break
            hull.pop()
        hull.append(i)
    return hull


def eer(scores):
    """Equal error rate and the threshold where it is reached.

    FAR and FRR are linearly interpolated between adjacent vertices of the ROC
    convex hull, which is where the two rates cross.
    """
    curve = roc(scores)
    hull = _lower_hull(curve)
    d = curve.far[hull] - curve.frr[hull]
    k = int(np.argmax(d >= 0))
    if k == 0:
        i = hull[0]
        return float(curve.far[i]), float(curve.tau[i])
    i, j = hull[k - 1], hull[k]
    t = -d[k - 1] / (d[k] - d[k - 1])
    rate = curve.far[i] + t * (curve.far[j] - curve.far[i])
    ti, tj = curve.tau[i], curve.tau[j]
    if np.isfinite(ti) and np.isfinite(tj):
        tau = ti + t * (tj - ti)
    else:
        tau = ti if np.isfinite(ti) else tj
    return float(rate), float(tau)


def gar_at_far(scores, far_level):
    """GAR at the largest threshold whose FAR does not exceed ``far_level`` (no interpolation)."""
    if not 0 <= far_level < 1:
        raise ContractError(f"far_level must lie in [0, 1), got {far_level}")
    curve = roc(scores)
    idx = np.nonzero(curve.far <= far_level)[0][-1]
    return float(curve.gar[idx])


def accuracy_at_eer(scores):
    return 1.0 - eer(scores)[0]


def histogram(values, bins):
    """Equal-width bins over [min, max] as ``(low, high, count)`` triples.

    A constant input falls back to one unit-wide range centred on the value.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise InsufficientDataError("histogram of an empty list")
    if bins < 1:
        raise ContractError(f"bins must be >= 1, got {bins}")
    counts, edges = np.histogram(values, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def summary(scores):
    """The four reported quantities: EER, GAR at FAR 1e-1 and 1e-2, accuracy at EER."""
    rate, _ = eer(scores)
    return {
        "EER": rate,
        "GAR@1e-1FAR": gar_at_far(scores, 1e-1),
        "GAR@1e-2FAR": gar_at_far(scores, 1e-2),
        "Accuracy@EER": 1.0 - rate,
    }


def format_roc(curve):
    lines = ["tau,far,frr,gar"]
    lines += [",".join(repr(v) for v in row) for row in curve.rows()]
    return "\n".join(lines) + "\n"


def format_histogram(hist):
    lines = ["bin_low,bin_high,count"]
    lines += [f"{lo!r},{hi!r},{n}" for lo, hi, n in hist]
    return "\n".join(lines) + "\n"


def format_report(summary_values):
    lines = ["metric,percent,rate"]
    for name, rate in summary_values.items():
        lines.append(f"{name},{100.0 * rate:.3f},{rate!r}")
    return "\n".join(lines) + "\n"
