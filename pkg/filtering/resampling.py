# resampling.py
"""Ancestor selection for both filter layers"""

from enum import Enum

import numpy as np

from ssm.exceptions import DegenerateWeightsError, InvalidArgumentError
from ssm.rng import as_generator


class ResamplingScheme(str, Enum):
    MULTINOMIAL = 'multinomial'
    SYSTEMATIC = 'systematic'


def _normalised(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise InvalidArgumentError(f"Weights must be a non-empty vector, got shape {weights.shape}")
    if np.any(np.isnan(weights)) or np.any(weights < 0):
        raise InvalidArgumentError("Weights must be nonnegative")
    total = weights.sum()
    if not total > 0 or not np.isfinite(total):
        raise DegenerateWeightsError("All resampling weights are zero", level='resample')
    return weights / total


def resample(weights, count: int, scheme, rng) -> np.ndarray:
    """
    `count` ancestor indices; index i is expected count * w_i times.
    Systematic uses one uniform offset for the evenly spaced positions.
    """
    scheme = ResamplingScheme(scheme)
    weights = _normalised(weights)
    gen = as_generator(rng)

    if scheme is ResamplingScheme.MULTINOMIAL:
        return gen.choice(weights.size, size=count, p=weights)

    positions = (np.arange(count) + gen.uniform()) / count
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    indices = np.searchsorted(cumulative, positions, side='right')
    return np.minimum(indices, weights.size - 1)


def resample_rows(weights, count: int, scheme, rng) -> np.ndarray:
    """Resample each row of a (B, N) weight matrix, banks in order from one generator"""
    weights = np.asarray(weights, dtype=float)
    gen = as_generator(rng)
    indices = np.empty((weights.shape[0], count), dtype=int)
    for row, row_weights in enumerate(weights):
        try:
            indices[row] = resample(row_weights, count, scheme, gen)
        except DegenerateWeightsError as e:
            raise DegenerateWeightsError(str(e), level='state', index=row) from e
    return indices
