"""Shared numeric primitives: quantiles, normal inverse CDF, log-sum-exp, seeded RNG streams."""

from __future__ import annotations

import zlib
from enum import Enum

import numpy as np
from scipy import special


class QuantileMode(Enum):
    """How empirical_quantile picks its value.

    CONFORMAL: the k-th smallest element with k = ceil(level * (n + 1)),
    clamped to n. This is the finite-sample choice that makes the split
    conformal coverage guarantee hold exactly.

    LINEAR: standard interpolated empirical quantile, for diagnostics only.
    """

    CONFORMAL = "conformal"
    LINEAR = "linear"


def empirical_quantile(values, level: float, mode: QuantileMode = QuantileMode.CONFORMAL) -> float:
    """Empirical quantile of `values` at `level` in [0, 1]."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty sample")
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"level {level} outside [0, 1]")
    if mode is QuantileMode.LINEAR:
        return float(np.quantile(values, level))
    n = values.size
    k = int(np.ceil(level * (n + 1)))
    k = min(max(k, 1), n)
    return float(np.partition(values, k - 1)[k - 1])


def inv_std_normal_cdf(p):
    """Inverse CDF of the standard normal, z with Phi(z) = p, for p in (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("probability out of range")
    z = special.ndtri(p_arr)
    return float(z) if np.isscalar(p) or p_arr.ndim == 0 else z


def log_sum_exp(values, axis=None):
    """log(sum(exp(values))) with max-shift stabilization."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty sample")
    out = special.logsumexp(values, axis=axis)
    return float(out) if axis is None else out


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent named RNG stream for (seed, keys).

    Keys may be ints or strings; strings are hashed with crc32 so the
    stream identity is stable across processes and runs. One stream per
    (model index, dataset, purpose) keeps the whole experiment grid
    bit-reproducible.
    """
    entropy = [int(seed)]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode()))
        else:
            entropy.append(int(key))
    return np.random.default_rng(np.random.SeedSequence(entropy))
