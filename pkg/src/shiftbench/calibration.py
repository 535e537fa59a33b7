"""Val-set interval recalibration and the end-to-end split-conformal pipeline.

Recalibration widens (or shrinks) every raw interval symmetrically by the
conformal quantile of the val conformity scores max(L - y, y - U), making
the val coverage match 1 - alpha up to order-statistic discretization.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .intervals import Intervals, conformal_halfwidth, conformal_intervals
from .statkit import QuantileMode, empirical_quantile


def conformity_scores(intervals: Intervals, targets) -> np.ndarray:
    """Per-example max(L - y, y - U); negative when y is strictly inside."""
    targets = np.asarray(targets, dtype=float)
    if targets.shape != intervals.lower.shape:
        raise ValueError("intervals/targets length mismatch")
    return np.maximum(intervals.lower - targets, targets - intervals.upper)


def calibration_offset(scores, alpha: float) -> float:
    """Conformal (1-alpha) quantile of the conformity scores."""
    return empirical_quantile(scores, 1.0 - alpha, QuantileMode.CONFORMAL)


def calibrate(intervals: Intervals, offset: float) -> Intervals:
    """Widen each interval symmetrically by `offset` (shrink when negative).

    The point prediction is unchanged; if shrinking would invert an interval
    it collapses to zero width at the point.
    """
    lower = np.minimum(intervals.lower - offset, intervals.point)
    upper = np.maximum(intervals.upper + offset, intervals.point)
    return Intervals(lower, upper, intervals.point.copy(), intervals.alpha)


def collapse_count(intervals: Intervals, offset: float) -> int:
    """Diagnostic: intervals that would invert under this (negative) offset."""
    return int(np.sum(intervals.upper + offset < intervals.lower - offset))


def calibrate_from_val(raw_val: Intervals, val_targets, raw_test: Intervals) -> Intervals:
    """Full recalibration step: offset from val scores, applied to test."""
    scores = conformity_scores(raw_val, val_targets)
    return calibrate(raw_test, calibration_offset(scores, raw_val.alpha))


def split_conformal(model: nn.TrainedModel, cal_X, cal_y, test_X, alpha: float) -> Intervals:
    """Fixed-halfwidth intervals around test predictions of a direct model.

    Halfwidth is the conformal quantile of absolute residuals on the
    calibration set.
    """
    if model.architecture.head != "direct":
        raise ValueError("split_conformal requires a direct-head model")
    cal_y = np.asarray(cal_y, dtype=float)
    if cal_y.size == 0:
        raise ValueError("empty calibration set")
    residuals = np.abs(cal_y - nn.predict(model, cal_X))
    q = conformal_halfwidth(residuals, alpha)
    return conformal_intervals(nn.predict(model, test_X), q, alpha)
