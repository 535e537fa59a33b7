"""Raw prediction-interval construction for each interval-producing method."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statkit import QuantileMode, empirical_quantile, inv_std_normal_cdf


@dataclass
class Intervals:
    """A batch of prediction intervals at a shared miscoverage rate alpha."""

    lower: np.ndarray
    upper: np.ndarray
    point: np.ndarray
    alpha: float

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.point = np.atleast_1d(np.asarray(self.point, dtype=float))
        if not (self.lower.shape == self.upper.shape == self.point.shape):
            raise ValueError("lower/upper/point shape mismatch")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha outside (0, 1)")
        if np.any(self.lower > self.upper) or np.any(self.point < self.lower) \
                or np.any(self.point > self.upper):
            raise ValueError("interval invariant lower <= point <= upper violated")

    def __len__(self):
        return self.lower.size

    def length(self) -> np.ndarray:
        return self.upper - self.lower


def conformal_halfwidth(residuals, alpha: float) -> float:
    """(1-alpha) conformal order-statistic quantile of absolute residuals."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size == 0:
        raise ValueError("empty sample")
    return empirical_quantile(residuals, 1.0 - alpha, QuantileMode.CONFORMAL)


def conformal_intervals(predictions, halfwidth: float, alpha: float) -> Intervals:
    predictions = np.asarray(predictions, dtype=float)
    return Intervals(predictions - halfwidth, predictions + halfwidth, predictions, alpha)


def gaussian_interval(mu, sigma2, alpha: float) -> Intervals:
    """mu -/+ sigma * z_{1-alpha/2}; point prediction mu."""
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0.0):
        raise ValueError("sigma2 must be positive")
    z = inv_std_normal_cdf(1.0 - alpha / 2.0)
    half = np.sqrt(sigma2) * z
    return Intervals(mu - half, mu + half, mu, alpha)


def quantile_interval(q_lo, q_up, alpha: float) -> Intervals:
    """Interval from the two quantile outputs; crossed quantiles are swapped."""
    q_lo = np.atleast_1d(np.asarray(q_lo, dtype=float))
    q_up = np.atleast_1d(np.asarray(q_up, dtype=float))
    lower = np.minimum(q_lo, q_up)
    upper = np.maximum(q_lo, q_up)
    return Intervals(lower, upper, 0.5 * (lower + upper), alpha)


def crossing_count(q_lo, q_up) -> int:
    """Diagnostic: number of crossed quantile pairs."""
    return int(np.sum(np.asarray(q_lo) > np.asarray(q_up)))


def fuse_gaussian_ensemble(mus, sigma2s):
    """Moment-matched fusion of M >= 2 Gaussian members (axis 0 = member).

    mu_hat = mean of member means; sigma2_hat = mean of
    (mu_hat - mu_i)^2 + sigma2_i.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    sigma2s = np.atleast_1d(np.asarray(sigma2s, dtype=float))
    if mus.shape != sigma2s.shape:
        raise ValueError("means/variances shape mismatch")
    if mus.shape[0] < 2:
        raise ValueError("need at least 2 ensemble members")
    mu_hat = mus.mean(axis=0)
    sigma2_hat = np.mean((mu_hat - mus) ** 2 + sigma2s, axis=0)
    return mu_hat, sigma2_hat


def direct_ensemble_stats(preds):
    """Mean and population (1/M) variance of member point predictions (axis 0)."""
    preds = np.atleast_1d(np.asarray(preds, dtype=float))
    if preds.shape[0] < 2:
        raise ValueError("need at least 2 ensemble members")
    mu_hat = preds.mean(axis=0)
    sigma2_hat = np.mean((mu_hat - preds) ** 2, axis=0)
    return mu_hat, sigma2_hat
