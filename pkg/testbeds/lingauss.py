# lingauss.py
"""
Scalar linear-Gaussian model with a closed-form filter and EIG.

    x_t = a x_{t-1} + w_t,            w_t ~ N(0, q)
    y_t = xi (c theta + x_t) + v_t,   v_t ~ N(0, r)
    theta ~ N(theta_mean, theta_var), x_0 ~ N(state_mean, state_var)

The pair z = (theta, x_t) stays jointly Gaussian, so the Kalman recursion on z
gives exact posteriors and the EIG about theta is available analytically.
Used as the oracle for the filter and the estimators.
"""

from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ssm.base import StateSpaceModel, as_shape, design_values
from ssm.types import Reparam


class LinGaussConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: Literal['lingauss'] = 'lingauss'
    a: float = 0.9
    q: float = Field(0.1, gt=0)
    r: float = Field(1.0, gt=0)
    coupling: float = 1.0
    theta_mean: float = 0.0
    theta_var: float = Field(1.0, ge=0)
    state_mean: float = 0.0
    state_var: float = Field(1.0, ge=0)
    design_low: float = -2.0
    design_high: float = 2.0
    true_theta: float = 0.5
    true_initial_state: float = 0.0

    @model_validator(mode='after')
    def _check_design_box(self):
        if not self.design_low < self.design_high:
            raise ValueError('design_low must be below design_high')
        return self


# ========================================================================
# EXACT RECURSIONS
# ========================================================================

@dataclass(frozen=True)
class GaussianMoments:
    """Mean and covariance of (theta, x_t)"""
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def prior(cls, config: LinGaussConfig) -> 'GaussianMoments':
        return cls(
            mean=np.array([config.theta_mean, config.state_mean]),
            cov=np.diag([config.theta_var, config.state_var]),
        )

    @property
    def theta_mean(self) -> float:
        return float(self.mean[0])

    @property
    def state_mean(self) -> float:
        return float(self.mean[1])

    @property
    def state_var(self) -> float:
        return float(self.cov[1, 1])


def _observation_row(config: LinGaussConfig, xi) -> np.ndarray:
    xi = float(design_values(xi)[0])
    return np.array([xi * config.coupling, xi])


def kalman_predict(config: LinGaussConfig, moments: GaussianMoments) -> GaussianMoments:
    transition = np.array([[1.0, 0.0], [0.0, config.a]])
    return GaussianMoments(
        mean=transition @ moments.mean,
        cov=transition @ moments.cov @ transition.T + np.diag([0.0, config.q]),
    )


def kalman_update(config: LinGaussConfig, moments: GaussianMoments, y, xi) -> GaussianMoments:
    row = _observation_row(config, xi)
    y = float(np.asarray(y, dtype=float).reshape(-1)[0])
    innovation_var = row @ moments.cov @ row + config.r
    gain = moments.cov @ row / innovation_var
    mean = moments.mean + gain * (y - row @ moments.mean)
    cov = moments.cov - np.outer(gain, row @ moments.cov)
    return GaussianMoments(mean=mean, cov=0.5 * (cov + cov.T))


def kalman_filter(config: LinGaussConfig, designs: Sequence, observations: Sequence) -> List[GaussianMoments]:
    """Filtered moments after each of the T steps"""
    moments = GaussianMoments.prior(config)
    filtered = []
    for xi, y in zip(designs, observations):
        moments = kalman_update(config, kalman_predict(config, moments), y, xi)
        filtered.append(moments)
    return filtered


def predictive_moments(config: LinGaussConfig, predicted: GaussianMoments, xi) -> Tuple[float, float]:
    """Marginal mean and variance of y under predicted moments of (theta, x_t)"""
    row = _observation_row(config, xi)
    return float(row @ predicted.mean), float(row @ predicted.cov @ row + config.r)


def conditional_predictive(config: LinGaussConfig, predicted: GaussianMoments, xi, theta) -> Tuple[float, float]:
    """Mean and variance of y given theta"""
    xi = float(design_values(xi)[0])
    (p_tt, p_tx), (_, p_xx) = predicted.cov
    if p_tt > 0.0:
        state_mean = predicted.state_mean + p_tx / p_tt * (theta - predicted.theta_mean)
        state_var = p_xx - p_tx ** 2 / p_tt
    else:
        state_mean, state_var = predicted.state_mean, p_xx
    mean = xi * (config.coupling * theta + state_mean)
    return float(mean), float(xi ** 2 * state_var + config.r)


def lin_gauss_exact(config: LinGaussConfig, moments: GaussianMoments, xi, predict: bool = True):
    """
    Exact EIG about theta of the next observation at xi:
        1/2 log( Var(y) / Var(y | theta) )

    `moments` is the filtered posterior at t-1 (predicted one step first) or,
    with predict=False, already the one-step predictive of (theta, x_t).
    Returns (eig, predictive moments).
    """
    predicted = kalman_predict(config, moments) if predict else moments
    _, marginal_var = predictive_moments(config, predicted, xi)
    _, conditional_var = conditional_predictive(config, predicted, xi, predicted.theta_mean)
    eig = 0.5 * np.log(marginal_var / conditional_var)
    return max(float(eig), 0.0), predicted


# ========================================================================
# MODEL
# ========================================================================

class LinearGaussianModel(StateSpaceModel):
    """Verification model with scalar theta, state, observation and design"""

    name = 'lingauss'
    param_dim = 1
    state_dim = 1
    obs_dim = 1
    design_dim = 1
    reparam = Reparam.UNCONSTRAINED

    def __init__(self, config: Optional[LinGaussConfig] = None):
        super().__init__(config or LinGaussConfig())

    @property
    def param_bounds(self):
        return np.array([-np.inf]), np.array([np.inf])

    def sample_param_prior(self, size, gen):
        draws = gen.normal(size=(size, 1))
        return self.config.theta_mean + np.sqrt(self.config.theta_var) * draws

    def sample_state_prior(self, shape, gen):
        draws = gen.normal(size=as_shape(shape) + (1,))
        return self.config.state_mean + np.sqrt(self.config.state_var) * draws

    def true_params(self):
        return np.array([self.config.true_theta])

    def initial_true_state(self):
        return np.array([self.config.true_initial_state])

    def _signal(self, x, theta):
        return self.config.coupling * np.asarray(theta, dtype=float) + np.asarray(x, dtype=float)

    def sample_transition(self, x, theta, xi, gen):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(x.shape, np.shape(theta)[:-1] + (1,))
        return self.config.a * x + np.sqrt(self.config.q) * gen.normal(size=shape)

    def log_transition(self, x_new, x, theta, xi):
        residual = np.asarray(x_new, dtype=float) - self.config.a * np.asarray(x, dtype=float)
        q = self.config.q
        return np.sum(-0.5 * np.log(2.0 * np.pi * q) - residual ** 2 / (2.0 * q), axis=-1)

    def sample_observation(self, x, theta, xi, gen):
        mean = design_values(xi) * self._signal(x, theta)
        return mean + np.sqrt(self.config.r) * gen.normal(size=mean.shape)

    def log_observation(self, y, x, theta, xi):
        residual = np.asarray(y, dtype=float) - design_values(xi) * self._signal(x, theta)
        r = self.config.r
        return np.sum(-0.5 * np.log(2.0 * np.pi * r) - residual ** 2 / (2.0 * r), axis=-1)

    def grad_xi_log_observation(self, y, x, theta, xi):
        signal = self._signal(x, theta)
        residual = np.asarray(y, dtype=float) - design_values(xi) * signal
        return residual * signal / self.config.r

    def sample_random_design(self, gen):
        return self.design_from_values([gen.uniform(self.config.design_low, self.config.design_high)])

    def fixed_design(self):
        return self.design_from_values([1.0])
