# base.py
"""
The state-space model contract every testbed implements.

All density and sampling methods are vectorised: leading axes are particle
axes and broadcast against each other, the last axis is the coordinate axis.
`xi` is always the vector of design values (not the latent).
"""

from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np

from .reparam import latent_from_values, transform_design
from .types import DesignVector, Reparam


def as_shape(shape) -> tuple:
    """Normalise an int or tuple particle shape"""
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def design_values(xi) -> np.ndarray:
    """Accept a DesignVector or a raw value vector"""
    if isinstance(xi, DesignVector):
        return xi.values
    return np.atleast_1d(np.asarray(xi, dtype=float))


class StateSpaceModel(ABC):
    """
    Interface for f(x_t | x_{t-1}, theta, xi_t) and g(y_t | x_t, theta, xi_t).

    Implementations must be stateless: every method is a pure function of its
    arguments and of the immutable config, so they can be shared across threads.
    """

    name: str = 'model'
    param_dim: int
    state_dim: int
    obs_dim: int
    design_dim: int
    reparam: Reparam = Reparam.UNCONSTRAINED
    # Both testbeds only act through the observation model
    transition_depends_on_design: bool = False

    def __init__(self, config):
        self.config = config

    # ------------------------------------------------------------------
    # Priors
    # ------------------------------------------------------------------

    @property
    @abstractmethod
    def param_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """(lower, upper) support bounds of theta, possibly infinite"""

    @abstractmethod
    def sample_param_prior(self, size: int, gen: np.random.Generator) -> np.ndarray:
        """(size, d_theta) draws from p(theta)"""

    @abstractmethod
    def sample_state_prior(self, shape, gen: np.random.Generator) -> np.ndarray:
        """shape + (d_x,) draws from p(x_0)"""

    # ------------------------------------------------------------------
    # Transition f
    # ------------------------------------------------------------------

    @abstractmethod
    def sample_transition(self, x, theta, xi, gen: np.random.Generator) -> np.ndarray:
        """Draw x_t ~ f(. | x, theta, xi); output has the broadcast particle shape"""

    @abstractmethod
    def log_transition(self, x_new, x, theta, xi) -> np.ndarray:
        """log f(x_new | x, theta, xi)"""

    def grad_xi_log_transition(self, x_new, x, theta, xi) -> np.ndarray:
        """d/dxi log f; exactly zero for design-independent dynamics"""
        xi = design_values(xi)
        shape = np.broadcast_shapes(
            np.shape(x_new)[:-1], np.shape(x)[:-1], np.shape(theta)[:-1]
        )
        return np.zeros(shape + (xi.shape[0],))

    def project_state(self, x) -> np.ndarray:
        """Feasibility projection; identity unless the model overrides it"""
        return x

    # ------------------------------------------------------------------
    # Observation g
    # ------------------------------------------------------------------

    @abstractmethod
    def sample_observation(self, x, theta, xi, gen: np.random.Generator) -> np.ndarray:
        """Draw y ~ g(. | x, theta, xi)"""

    @abstractmethod
    def log_observation(self, y, x, theta, xi) -> np.ndarray:
        """log g(y | x, theta, xi)"""

    @abstractmethod
    def grad_xi_log_observation(self, y, x, theta, xi) -> np.ndarray:
        """d/dxi log g(y | x, theta, xi), shape (..., d_xi)"""

    # ------------------------------------------------------------------
    # Designs and ground truth
    # ------------------------------------------------------------------

    @abstractmethod
    def sample_random_design(self, gen: np.random.Generator) -> DesignVector:
        """Uniform draw over the design constraint set"""

    def fixed_design(self) -> DesignVector:
        """Constant design used by the `fixed` policy"""
        return self.design_from_values(np.zeros(self.design_dim))

    def design_from_values(self, values) -> DesignVector:
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return transform_design(latent_from_values(values, self.reparam), self.reparam, self.design_dim)

    @abstractmethod
    def true_params(self) -> np.ndarray:
        """theta used to simulate the ground truth"""

    @abstractmethod
    def initial_true_state(self) -> np.ndarray:
        """x_0 of the ground-truth trajectory"""

    def boundary_states(self) -> np.ndarray:
        """Extra states probed by validate_model (edges of the feasible set)"""
        return np.empty((0, self.state_dim))

    def pointing_error(self, xi, state) -> Optional[np.ndarray]:
        """Per-sensor pointing error in degrees, for models with orientations"""
        return None

    def describe(self) -> dict:
        """Serializable description (feeds config hashes)"""
        return {'name': self.name, 'config': self.config.model_dump(mode='json')}
