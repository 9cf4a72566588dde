# jitter.py
"""Gaussian jittering of parameter particles with reflection at the prior support"""

from dataclasses import dataclass

import numpy as np

from ssm.exceptions import InvalidArgumentError
from ssm.rng import as_generator


@dataclass(frozen=True)
class JitterKernel:
    """Isotropic Gaussian kernel with variance scale / M^1.5"""
    scale: float
    M: int
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.scale < 0:
            raise InvalidArgumentError(f"Jitter scale must be nonnegative, got {self.scale}")
        if self.M < 1:
            raise InvalidArgumentError(f"Jitter kernel needs M >= 1, got {self.M}")
        object.__setattr__(self, 'lower', np.asarray(self.lower, dtype=float))
        object.__setattr__(self, 'upper', np.asarray(self.upper, dtype=float))

    @classmethod
    def for_model(cls, model, scale: float, M: int) -> 'JitterKernel':
        lower, upper = model.param_bounds
        return cls(scale=scale, M=M, lower=lower, upper=upper)

    @property
    def variance(self) -> float:
        return self.scale / self.M ** 1.5

    @property
    def is_degenerate(self) -> bool:
        return self.variance == 0.0


def reflect(values, lower, upper) -> np.ndarray:
    """Fold values back into [lower, upper]; either bound may be infinite"""
    values = np.array(values, dtype=float, copy=True)
    lower = np.broadcast_to(lower, values.shape)
    upper = np.broadcast_to(upper, values.shape)

    boxed = np.isfinite(lower) & np.isfinite(upper)
    with np.errstate(invalid='ignore'):
        width = np.where(boxed, upper - lower, 1.0)
        folded = np.mod(np.where(boxed, values - lower, 0.0), 2.0 * width)
    folded = np.where(folded > width, 2.0 * width - folded, folded)
    values = np.where(boxed, lower + folded, values)

    only_lower = np.isfinite(lower) & ~boxed
    values = np.where(only_lower & (values < lower), 2.0 * lower - values, values)
    only_upper = np.isfinite(upper) & ~boxed
    values = np.where(only_upper & (values > upper), 2.0 * upper - values, values)
    return values


def jitter(params, kernel: JitterKernel, rng) -> np.ndarray:
    """params + N(0, variance) per coordinate, reflected into the support"""
    params = np.asarray(params, dtype=float)
    if kernel.is_degenerate:
        return params.copy()
    noise = as_generator(rng).normal(0.0, np.sqrt(kernel.variance), size=params.shape)
    return reflect(params + noise, kernel.lower, kernel.upper)
