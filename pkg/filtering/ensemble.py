# ensemble.py
"""
Nested ensemble: M parameter particles, each carrying a bank of N state particles.
"""

from dataclasses import dataclass

import numpy as np

from ssm.exceptions import InvalidArgumentError
from ssm.rng import as_stream

WEIGHT_TOLERANCE = 1e-9


def _read_only(values) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class NestedEnsemble:
    """
    params        (M, d_theta)
    param_weights (M,)
    states        (M, N, d_x)
    state_weights (M, N)
    t             number of assimilated observations
    """
    params: np.ndarray
    param_weights: np.ndarray
    states: np.ndarray
    state_weights: np.ndarray
    t: int = 0

    def __post_init__(self):
        for name in ('params', 'param_weights', 'states', 'state_weights'):
            object.__setattr__(self, name, _read_only(getattr(self, name)))
        self._check()

    def _check(self):
        if self.params.ndim != 2 or self.states.ndim != 3:
            raise InvalidArgumentError(
                f"Expected params (M, d) and states (M, N, d), got {self.params.shape} and {self.states.shape}"
            )
        m, n = self.states.shape[:2]
        if self.params.shape[0] != m or self.param_weights.shape != (m,) or self.state_weights.shape != (m, n):
            raise InvalidArgumentError("Ensemble arrays disagree on (M, N)")
        if np.any(self.param_weights < 0) or np.any(self.state_weights < 0):
            raise InvalidArgumentError("Ensemble weights must be nonnegative")
        if abs(self.param_weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidArgumentError(f"Parameter weights sum to {self.param_weights.sum()!r}")
        row_sums = self.state_weights.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > WEIGHT_TOLERANCE):
            raise InvalidArgumentError(f"State weights of bank {int(np.argmax(np.abs(row_sums - 1.0)))} do not sum to 1")
        if self.t < 0:
            raise InvalidArgumentError("Timestep must be nonnegative")

    @property
    def M(self) -> int:
        return self.params.shape[0]

    @property
    def N(self) -> int:
        return self.states.shape[1]

    @property
    def joint_weights(self) -> np.ndarray:
        """w_theta^(m) w_x^(m,n), shape (M, N)"""
        return self.param_weights[:, None] * self.state_weights


def init_ensemble(model, M: int, N: int, rng) -> NestedEnsemble:
    """Prior draws for both layers with uniform weights, t = 0"""
    if M < 1 or N < 1:
        raise InvalidArgumentError(f"Ensemble sizes must be >= 1, got M={M}, N={N}")
    stream = as_stream(rng)
    params = model.sample_param_prior(M, stream.child('params').generator())
    states = model.sample_state_prior((M, N), stream.child('states').generator())
    return NestedEnsemble(
        params=params,
        param_weights=np.full(M, 1.0 / M),
        states=states,
        state_weights=np.full((M, N), 1.0 / N),
        t=0,
    )


@dataclass(frozen=True)
class PosteriorSummary:
    param_mean: np.ndarray
    param_cov: np.ndarray
    state_mean: np.ndarray


def posterior_summary(ens: NestedEnsemble) -> PosteriorSummary:
    """Weighted moments; the state marginal uses the joint weights"""
    w = ens.param_weights
    param_mean = w @ ens.params
    centred = ens.params - param_mean
    param_cov = (centred * w[:, None]).T @ centred
    state_mean = np.einsum('mn,mnd->d', ens.joint_weights, ens.states)
    return PosteriorSummary(param_mean=param_mean, param_cov=param_cov, state_mean=state_mean)
