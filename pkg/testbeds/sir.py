# sir.py
"""
Two-group SIR diffusion observed through Poisson case counts.

State  x = (S1, I1, S2, I2), R_g = N_g - S_g - I_g implicit.
Params theta = (beta1, gamma1); (beta2, gamma2) are fixed and known.
Design xi = (xi1, xi2) on the simplex, splitting the sampling effort kappa.
"""

from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import gammaln, xlogy

from ssm.base import StateSpaceModel, as_shape, design_values
from ssm.exceptions import InvalidArgumentError, NumericError
from ssm.types import Reparam

# Stoichiometry of (infection 1, recovery 1, infection 2, recovery 2)
STOICHIOMETRY = np.array([
    [-1.0, 0.0, 0.0, 0.0],
    [1.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0, -1.0],
])
STOICHIOMETRY_INV = np.linalg.inv(STOICHIOMETRY)

VARIANCE_FLOOR = 1e-12


class SirConfig(BaseModel):
    """Two-group SIR setup; defaults are the published simulation values"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: Literal['sir'] = 'sir'
    populations: Tuple[float, float] = (200.0, 200.0)
    initial_infected: Tuple[float, float] = (5.0, 5.0)
    detection: Tuple[float, float] = (0.95, 0.5)
    effort: float = Field(100.0, gt=0)
    mixing: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.9, 0.1), (0.1, 0.9))
    dtau: float = Field(0.1, gt=0)
    substeps: int = Field(1, ge=1)
    beta2: float = Field(0.55, ge=0)
    gamma2: float = Field(0.15, ge=0)
    prior_low: float = 0.1
    prior_high: float = 1.0
    true_beta1: float = 0.65
    true_gamma1: float = 0.15
    rate_floor: float = Field(1e-8, ge=0)

    @field_validator('populations', 'detection')
    @classmethod
    def _positive(cls, value):
        if any(v <= 0 for v in value):
            raise ValueError('must be strictly positive')
        return value

    @field_validator('mixing')
    @classmethod
    def _rows_sum_to_one(cls, value):
        for row in value:
            if any(v < 0 for v in row) or abs(sum(row) - 1.0) > 1e-9:
                raise ValueError('mixing rows must be nonnegative and sum to 1')
        return value

    @model_validator(mode='after')
    def _check_ranges(self):
        if not self.prior_low < self.prior_high:
            raise ValueError('prior_low must be below prior_high')
        for n, i0 in zip(self.populations, self.initial_infected):
            if not 0 <= i0 <= n:
                raise ValueError('initial_infected must lie in [0, population]')
        return self


# ========================================================================
# RATES AND EULER-MARUYAMA
# ========================================================================

def _group_params(theta, config: SirConfig):
    theta = np.asarray(theta, dtype=float)
    beta = np.stack([theta[..., 0], np.full(theta.shape[:-1], config.beta2)], axis=-1)
    gamma = np.stack([theta[..., 1], np.full(theta.shape[:-1], config.gamma2)], axis=-1)
    return beta, gamma


def sir_rates(state, beta, gamma, config: SirConfig) -> np.ndarray:
    """
    Transition rates a(X) = (lambda1, r1, lambda2, r2).

    lambda_g = beta_g S_g sum_h M_gh I_h / N_h,  r_g = gamma_g I_g
    """
    state = np.asarray(state, dtype=float)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    susceptible = state[..., [0, 2]]
    infected = state[..., [1, 3]]
    pressure = (infected / np.asarray(config.populations)) @ np.asarray(config.mixing).T
    infection = beta * susceptible * pressure
    recovery = gamma * infected
    rates = np.stack(
        [infection[..., 0], recovery[..., 0], infection[..., 1], recovery[..., 1]], axis=-1
    )
    return rates


def sir_project(state, config: SirConfig) -> np.ndarray:
    """Clamp to the per-group simplex of counts"""
    state = np.array(state, dtype=float, copy=True)
    for g, population in enumerate(config.populations):
        s_idx, i_idx = 2 * g, 2 * g + 1
        state[..., s_idx] = np.clip(state[..., s_idx], 0.0, population)
        state[..., i_idx] = np.clip(state[..., i_idx], 0.0, population - state[..., s_idx])
    return state


def sir_em_step(state, theta, gen: Optional[np.random.Generator], config: SirConfig, noise=None):
    """
    One Euler-Maruyama step followed by the feasibility projection.

    `noise` overrides the Wiener increments dW (shape (..., 4)); pass zeros for
    the deterministic drift.
    """
    state = np.asarray(state, dtype=float)
    beta, gamma = _group_params(theta, config)
    rates = sir_rates(state, beta, gamma, config)
    if np.any(rates < 0):
        raise NumericError("Negative SIR rate under the square root", term='transition')

    if noise is None:
        shape = np.broadcast_shapes(state.shape, rates.shape)
        noise = gen.normal(0.0, np.sqrt(config.dtau), size=shape)
    events = rates * config.dtau + np.sqrt(rates) * noise
    return sir_project(state + events @ STOICHIOMETRY.T, config)


# ========================================================================
# OBSERVATION MODEL
# ========================================================================

def _raw_obs_rate(state, xi, config: SirConfig):
    state = np.asarray(state, dtype=float)
    xi = design_values(xi)
    infected = state[..., [1, 3]]
    scale = config.effort * np.asarray(config.detection) / np.asarray(config.populations)
    return xi * scale * infected


def sir_obs_rate(state, xi, config: SirConfig) -> np.ndarray:
    """lambda_obs_g = kappa xi_g rho_g I_g / N_g, floored at rate_floor"""
    return np.maximum(_raw_obs_rate(state, xi, config), config.rate_floor)


def _check_counts(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise InvalidArgumentError("Poisson observations must be nonnegative integers")
    return y


def sir_log_obs(y, state, xi, config: SirConfig) -> np.ndarray:
    """Sum over groups of the Poisson log pmf, log(y!) via log-gamma"""
    y = _check_counts(y)
    rate = sir_obs_rate(state, xi, config)
    with np.errstate(divide='ignore'):
        return np.sum(xlogy(y, rate) - rate - gammaln(y + 1.0), axis=-1)


def sir_grad_xi_log_obs(y, state, xi, config: SirConfig) -> np.ndarray:
    """
    d log g / d xi_g = (y_g / lambda_g - 1) kappa rho_g I_g / N_g.
    Components sitting on the rate floor have zero derivative.
    """
    y = _check_counts(y)
    state = np.asarray(state, dtype=float)
    raw = _raw_obs_rate(state, xi, config)
    rate = np.maximum(raw, config.rate_floor)
    infected = state[..., [1, 3]]
    slope = config.effort * np.asarray(config.detection) * infected / np.asarray(config.populations)
    gradient = (y / rate - 1.0) * slope
    return np.where(raw > config.rate_floor, gradient, 0.0)


# ========================================================================
# MODEL
# ========================================================================

class SirModel(StateSpaceModel):
    """Two-group SIR testbed"""

    name = 'sir'
    param_dim = 2
    state_dim = 4
    obs_dim = 2
    design_dim = 2
    reparam = Reparam.SIMPLEX

    def __init__(self, config: Optional[SirConfig] = None):
        super().__init__(config or SirConfig())

    @property
    def param_bounds(self):
        low = np.full(self.param_dim, self.config.prior_low)
        high = np.full(self.param_dim, self.config.prior_high)
        return low, high

    def sample_param_prior(self, size, gen):
        return gen.uniform(self.config.prior_low, self.config.prior_high, size=(size, self.param_dim))

    def initial_true_state(self):
        (n1, n2), (i1, i2) = self.config.populations, self.config.initial_infected
        return np.array([n1 - i1, i1, n2 - i2, i2], dtype=float)

    def sample_state_prior(self, shape, gen):
        # Known initial condition
        return np.broadcast_to(self.initial_true_state(), as_shape(shape) + (self.state_dim,)).copy()

    def true_params(self):
        return np.array([self.config.true_beta1, self.config.true_gamma1])

    def sample_transition(self, x, theta, xi, gen):
        state = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        for _ in range(self.config.substeps):
            state = sir_em_step(state, theta, gen, self.config)
        return state

    def log_transition(self, x_new, x, theta, xi):
        """
        Gaussian density of the single-step Euler-Maruyama increment (projection
        ignored). With S invertible, S^{-1} dX - a dtau ~ N(0, diag(a dtau)).
        """
        x_new = np.asarray(x_new, dtype=float)
        x = np.asarray(x, dtype=float)
        beta, gamma = _group_params(theta, self.config)
        rates = sir_rates(x, beta, gamma, self.config)
        residual = (x_new - x) @ STOICHIOMETRY_INV.T - rates * self.config.dtau
        variance = rates * self.config.dtau + VARIANCE_FLOOR
        return np.sum(-0.5 * np.log(2.0 * np.pi * variance) - residual ** 2 / (2.0 * variance), axis=-1)

    def project_state(self, x):
        return sir_project(x, self.config)

    def sample_observation(self, x, theta, xi, gen):
        return gen.poisson(sir_obs_rate(x, xi, self.config)).astype(float)

    def log_observation(self, y, x, theta, xi):
        return sir_log_obs(y, x, xi, self.config)

    def grad_xi_log_observation(self, y, x, theta, xi):
        return sir_grad_xi_log_obs(y, x, xi, self.config)

    def sample_random_design(self, gen):
        share = gen.uniform(0.0, 1.0)
        return self.design_from_values([share, 1.0 - share])

    def fixed_design(self):
        return self.design_from_values([0.5, 0.5])

    def boundary_states(self):
        n1, n2 = self.config.populations
        return np.array([[n1, 0.0, n2, 0.0], [0.0, 0.0, 0.0, 0.0]])
