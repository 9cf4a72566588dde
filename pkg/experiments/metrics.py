# metrics.py
"""Run-level metrics and the BCa bootstrap"""

from typing import Tuple

import numpy as np
from scipy.stats import norm

from ssm.exceptions import InvalidArgumentError
from ssm.rng import as_generator

from .records import RunRecord


def delta_teig(run_a: RunRecord, run_b: RunRecord, t: int) -> float:
    """TEIG_t(a) - TEIG_t(b) for two runs of the same experiment"""
    if run_a.config_hash != run_b.config_hash:
        raise InvalidArgumentError(
            f"Runs were evaluated under different configs ({run_a.config_hash} vs {run_b.config_hash})"
        )
    if run_a.horizon != run_b.horizon:
        raise InvalidArgumentError(f"Runs have different horizons ({run_a.horizon} vs {run_b.horizon})")
    return run_a.teig_at(t) - run_b.teig_at(t)


def _jackknife_acceleration(samples: np.ndarray) -> float:
    n = samples.size
    leave_one_out = (samples.sum() - samples) / (n - 1)
    d = leave_one_out.mean() - leave_one_out
    denominator = 6.0 * np.sum(d ** 2) ** 1.5
    if denominator == 0.0:
        return 0.0
    return float(np.sum(d ** 3) / denominator)


def bootstrap_bca_ci(samples, level: float = 0.95, B: int = 2000, rng=0) -> Tuple[float, float]:
    """
    Bias-corrected and accelerated bootstrap interval for the mean.

    z0 comes from the share of bootstrap means below the sample mean (ties
    count half), the acceleration from the jackknife skewness of the
    leave-one-out means.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise InvalidArgumentError(f"BCa needs at least 2 samples, got {samples.size}")
    if not 0 < level < 1:
        raise InvalidArgumentError(f"Confidence level must lie in (0, 1), got {level}")
    if B < 2:
        raise InvalidArgumentError(f"B must be at least 2, got {B}")
    if not np.all(np.isfinite(samples)):
        raise InvalidArgumentError("Bootstrap samples must be finite")

    estimate = float(samples.mean())
    if np.ptp(samples) == 0.0:
        return estimate, estimate

    gen = as_generator(rng)
    boot = samples[gen.integers(0, samples.size, size=(B, samples.size))].mean(axis=1)

    below = (np.sum(boot < estimate) + 0.5 * np.sum(boot == estimate)) / B
    below = np.clip(below, 0.5 / B, 1.0 - 0.5 / B)
    z0 = norm.ppf(below)
    a = _jackknife_acceleration(samples)

    z = norm.ppf([(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    adjusted = norm.cdf(z0 + (z0 + z) / (1.0 - a * (z0 + z)))
    lo, hi = np.quantile(boot, adjusted)
    return float(lo), float(hi)
