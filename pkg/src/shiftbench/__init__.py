"""Regression uncertainty estimation under distribution shift.

Prediction-interval methods (split conformal, Gaussian, quantile regression,
ensembles), val-set recalibration, selective prediction with feature-space
density scores, and a synthetic tails/gap shift benchmark with an experiment
harness.
"""

__version__ = "0.1.0"

from . import calibration, intervals, metrics, nn, selective, statkit, synthbench  # noqa: F401
