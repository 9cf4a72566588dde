# source.py
"""
Moving acoustic source tracked by fixed directional sensors.

State  x = (p_x, p_y, phi), heading phi kept in (-pi, pi].
Params theta = (v_x, v_y); the turn rate v_phi is known.
Design xi = (xi_1 .. xi_J), one orientation per sensor in [-pi, pi).
Observations are log-normal around the cardioid-weighted inverse-square power.
"""

from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ssm.base import StateSpaceModel, as_shape, design_values
from ssm.exceptions import InvalidArgumentError
from ssm.reparam import wrap_heading, wrap_pi
from ssm.types import Reparam


class SourceConfig(BaseModel):
    """Sensor layout and source dynamics; defaults are the published simulation values"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: Literal['source'] = 'source'
    sensors: List[Tuple[float, float]] = [(3.0, 0.0), (0.0, 3.0)]
    strengths: List[float] = [5.0, 5.0]
    background: float = Field(0.1, gt=0)
    saturation: float = Field(0.1, gt=0)
    directivity_d: float = Field(1.0, ge=0, le=1)
    directivity_k: float = Field(4.0, gt=0)
    noise_var: float = Field(0.1, gt=0)
    dt: float = Field(0.1, gt=0)
    process_var: Tuple[float, float, float] = (0.2, 0.2, 0.01)
    v_phi: float = 0.3
    prior_low: float = 0.5
    prior_high: float = 1.5
    true_velocity: Tuple[float, float] = (1.0, 1.0)
    initial_state: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    state_prior_std: Tuple[float, float, float] = (0.5, 0.5, 0.1)

    @field_validator('strengths')
    @classmethod
    def _nonnegative(cls, value):
        if any(v < 0 for v in value):
            raise ValueError('sensor strengths must be nonnegative')
        return value

    @field_validator('process_var')
    @classmethod
    def _positive_diagonal(cls, value):
        if any(v <= 0 for v in value):
            raise ValueError('process covariance diagonal must be strictly positive')
        return value

    @field_validator('state_prior_std')
    @classmethod
    def _nonnegative_std(cls, value):
        if any(v < 0 for v in value):
            raise ValueError('state prior standard deviations must be nonnegative')
        return value

    @model_validator(mode='after')
    def _check_layout(self):
        if not self.sensors:
            raise ValueError('at least one sensor is required')
        if len(self.strengths) != len(self.sensors):
            raise ValueError('one strength per sensor is required')
        if not self.prior_low < self.prior_high:
            raise ValueError('prior_low must be below prior_high')
        return self


# ========================================================================
# DYNAMICS
# ========================================================================

def _drift(state, theta, config: SourceConfig):
    state = np.asarray(state, dtype=float)
    theta = np.asarray(theta, dtype=float)
    heading = state[..., 2]
    dx = theta[..., 0] * np.cos(heading)
    dy = theta[..., 1] * np.sin(heading)
    dphi = np.broadcast_to(config.v_phi, np.broadcast_shapes(dx.shape, dy.shape))
    return config.dt * np.stack(np.broadcast_arrays(dx, dy, dphi), axis=-1)


def source_step(state, theta, gen: Optional[np.random.Generator], config: SourceConfig, noise=None):
    """
    x_t = x_{t-1} + dt (v_x cos phi, v_y sin phi, v_phi) + eps,  eps ~ N(0, Q).
    `noise` overrides eps; pass zeros for the deterministic drift.
    """
    state = np.asarray(state, dtype=float)
    drift = _drift(state, theta, config)
    shape = np.broadcast_shapes(state.shape, drift.shape)
    if noise is None:
        noise = gen.normal(size=shape) * np.sqrt(np.asarray(config.process_var))
    moved = np.broadcast_to(state, shape) + drift + noise
    moved[..., 2] = wrap_heading(moved[..., 2])
    return moved


# ========================================================================
# OBSERVATION MODEL
# ========================================================================

def directivity(delta, config: SourceConfig) -> np.ndarray:
    """Cardioid D(delta) = ((1 + d cos delta) / (1 + d))^k"""
    d, k = config.directivity_d, config.directivity_k
    return ((1.0 + d * np.cos(delta)) / (1.0 + d)) ** k


def directivity_slope(delta, config: SourceConfig) -> np.ndarray:
    d, k = config.directivity_d, config.directivity_k
    base = (1.0 + d * np.cos(delta)) / (1.0 + d)
    return k * base ** (k - 1.0) * (-d * np.sin(delta)) / (1.0 + d)


def _geometry(state, config: SourceConfig):
    """Offsets p - s_j, squared ranges and bearings psi_j, each (..., J)"""
    state = np.asarray(state, dtype=float)
    offset = state[..., None, :2] - np.asarray(config.sensors, dtype=float)
    range_sq = np.sum(offset ** 2, axis=-1)
    bearing = np.arctan2(offset[..., 1], offset[..., 0])
    return range_sq, bearing


def bearing(state, config: SourceConfig) -> np.ndarray:
    """psi_j = atan2 of the sensor-to-source offset"""
    return _geometry(state, config)[1]


def source_mu(state, xi, config: SourceConfig) -> np.ndarray:
    """mu_j = b + alpha_j D(xi_j - psi_j) / (m + |p - s_j|^2)"""
    xi = design_values(xi)
    range_sq, psi = _geometry(state, config)
    gain = np.asarray(config.strengths) / (config.saturation + range_sq)
    return config.background + gain * directivity(xi - psi, config)


def _check_positive(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise InvalidArgumentError("Log-normal observations must be strictly positive")
    return y


def source_log_obs(y, state, xi, config: SourceConfig) -> np.ndarray:
    y = _check_positive(y)
    log_y = np.log(y)
    residual = log_y - np.log(source_mu(state, xi, config))
    var = config.noise_var
    return np.sum(-log_y - 0.5 * np.log(2.0 * np.pi * var) - residual ** 2 / (2.0 * var), axis=-1)


def source_grad_xi_log_obs(y, state, xi, config: SourceConfig) -> np.ndarray:
    """
    Component j: (log y_j - log mu_j) / sigma^2 * (1 / mu_j) * d mu_j / d xi_j.
    Sensor j's mean depends on xi_j only, so there are no cross terms.
    """
    y = _check_positive(y)
    xi = design_values(xi)
    range_sq, psi = _geometry(state, config)
    gain = np.asarray(config.strengths) / (config.saturation + range_sq)
    delta = xi - psi
    mu = config.background + gain * directivity(delta, config)
    dmu = gain * directivity_slope(delta, config)
    return (np.log(y) - np.log(mu)) / config.noise_var * dmu / mu


def pointing_error(xi, state, config: SourceConfig) -> np.ndarray:
    """|wrap(xi_j - psi_j)| per sensor, in degrees within [0, 180]"""
    xi = design_values(xi)
    range_sq, psi = _geometry(state, config)
    if np.any(range_sq == 0.0):
        raise InvalidArgumentError("Source coincides with a sensor; bearing is undefined")
    return np.degrees(np.abs(wrap_pi(xi - psi)))


# ========================================================================
# MODEL
# ========================================================================

class SourceModel(StateSpaceModel):
    """Moving-source testbed with J orientable sensors"""

    name = 'source'
    param_dim = 2
    state_dim = 3
    reparam = Reparam.ANGLE

    def __init__(self, config: Optional[SourceConfig] = None):
        super().__init__(config or SourceConfig())
        self.obs_dim = len(self.config.sensors)
        self.design_dim = len(self.config.sensors)
        self._process_var = np.asarray(self.config.process_var, dtype=float)

    @property
    def param_bounds(self):
        low = np.full(self.param_dim, self.config.prior_low)
        high = np.full(self.param_dim, self.config.prior_high)
        return low, high

    def sample_param_prior(self, size, gen):
        return gen.uniform(self.config.prior_low, self.config.prior_high, size=(size, self.param_dim))

    def sample_state_prior(self, shape, gen):
        shape = as_shape(shape) + (self.state_dim,)
        state = np.asarray(self.config.initial_state) + gen.normal(size=shape) * np.asarray(self.config.state_prior_std)
        state[..., 2] = wrap_heading(state[..., 2])
        return state

    def true_params(self):
        return np.asarray(self.config.true_velocity, dtype=float)

    def initial_true_state(self):
        state = np.asarray(self.config.initial_state, dtype=float)
        state[2] = wrap_heading(state[2])
        return state

    def sample_transition(self, x, theta, xi, gen):
        return source_step(x, theta, gen, self.config)

    def log_transition(self, x_new, x, theta, xi):
        x_new = np.asarray(x_new, dtype=float)
        mean = np.asarray(x, dtype=float) + _drift(x, theta, self.config)
        residual = x_new - mean
        residual[..., 2] = wrap_pi(residual[..., 2])
        var = self._process_var
        return np.sum(-0.5 * np.log(2.0 * np.pi * var) - residual ** 2 / (2.0 * var), axis=-1)

    def sample_observation(self, x, theta, xi, gen):
        log_mu = np.log(source_mu(x, xi, self.config))
        return np.exp(log_mu + np.sqrt(self.config.noise_var) * gen.normal(size=log_mu.shape))

    def log_observation(self, y, x, theta, xi):
        return source_log_obs(y, x, xi, self.config)

    def grad_xi_log_observation(self, y, x, theta, xi):
        return source_grad_xi_log_obs(y, x, xi, self.config)

    def sample_random_design(self, gen):
        return self.design_from_values(gen.uniform(-np.pi, np.pi, size=self.design_dim))

    def fixed_design(self):
        # Every sensor faces the origin
        sensors = np.asarray(self.config.sensors, dtype=float)
        return self.design_from_values(np.arctan2(-sensors[:, 1], -sensors[:, 0]))

    def boundary_states(self):
        on_sensor = [[sx, sy, 0.0] for sx, sy in self.config.sensors]
        return np.array(on_sensor + [[1e3, 1e3, np.pi]])

    def pointing_error(self, xi, state):
        return pointing_error(xi, state, self.config)
