"""Evaluation metrics: coverage, prediction rate, MAE, interval length, ECE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import Intervals


@dataclass
class MetricsReport:
    coverage: float
    prediction_rate: float
    mae_val: float
    interval_length_val: float
    ece: float
    coverage_error: float
    alpha: float
    n_evaluated: int

    FIELDS = ("coverage", "prediction_rate", "mae_val", "interval_length_val",
              "ece", "coverage_error")


def coverage(intervals: Intervals, targets, accepted_mask=None) -> float:
    """Fraction of (accepted) targets inside their closed interval."""
    targets = np.asarray(targets, dtype=float)
    if targets.shape != intervals.lower.shape:
        raise ValueError("intervals/targets length mismatch")
    covered = (intervals.lower <= targets) & (targets <= intervals.upper)
    if accepted_mask is not None:
        accepted_mask = np.asarray(accepted_mask, dtype=bool)
        if not np.any(accepted_mask):
            raise ValueError("empty selective subset")
        covered = covered[accepted_mask]
    return float(np.mean(covered))


def prediction_rate(accepted_mask) -> float:
    accepted_mask = np.asarray(accepted_mask, dtype=bool)
    if accepted_mask.size == 0:
        raise ValueError("empty mask")
    return float(np.mean(accepted_mask))


def mae(points, targets) -> float:
    points = np.asarray(points, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if points.size == 0 or points.shape != targets.shape:
        raise ValueError("points/targets length mismatch or empty")
    return float(np.mean(np.abs(points - targets)))


def mean_interval_length(intervals: Intervals) -> float:
    if len(intervals) == 0:
        raise ValueError("empty intervals")
    return float(np.mean(intervals.length()))


def ece(make_intervals, targets, m: int = 99, accepted_mask=None) -> float:
    """Expected calibration error over a deterministic miscoverage grid.

    `make_intervals(alpha)` must return Intervals for the same inputs that
    produced `targets`. The grid is alpha_j = j/(m+1), j = 1..m; the ECE is
    the mean absolute deviation of coverage from 1 - alpha_j.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    deviations = []
    for j in range(1, m + 1):
        alpha_j = j / (m + 1)
        try:
            intervals_j = make_intervals(alpha_j)
        except Exception as exc:
            raise RuntimeError(f"interval construction failed at alpha={alpha_j}") from exc
        cov = coverage(intervals_j, targets, accepted_mask)
        deviations.append(abs(cov - (1.0 - alpha_j)))
    return float(np.mean(deviations))


def coverage_error(cov: float, alpha: float) -> float:
    """|empirical coverage - (1 - alpha)|."""
    return abs(cov - (1.0 - alpha))
