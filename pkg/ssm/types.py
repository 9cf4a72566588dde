# types.py
"""
Domain value types shared by the filter, the estimators and the harness.

Particle collections are plain numpy arrays with the particle axes first and
the coordinate axis last, e.g. states of an ensemble are (M, N, d_x). The
dataclasses below wrap single points where a named type reads better.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from .exceptions import InvalidArgumentError


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    if array.ndim == 0:
        array = array.reshape(1)
    array.setflags(write=False)
    return array


class Reparam(str, Enum):
    """How an unconstrained latent maps onto the design space"""
    SIMPLEX = 'simplex-sigmoid'
    ANGLE = 'angle-wrap'
    UNCONSTRAINED = 'unconstrained'


@dataclass(frozen=True)
class ParamVector:
    """Static parameter theta with per-coordinate support bounds"""
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_array(self.values))
        lower = _frozen_array(np.broadcast_to(self.lower, self.values.shape))
        upper = _frozen_array(np.broadcast_to(self.upper, self.values.shape))
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)
        if not self.in_support():
            raise InvalidArgumentError(
                f"Parameter {self.values.tolist()} outside support "
                f"[{self.lower.tolist()}, {self.upper.tolist()}]"
            )

    def in_support(self) -> bool:
        return bool(np.all(self.values >= self.lower) and np.all(self.values <= self.upper))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class StateVector:
    """Latent state x_t; feasibility is the model's business (project_state)"""
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_array(self.values))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Observation:
    """Observation y_t; counts are carried as reals"""
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_array(self.values))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DesignVector:
    """
    Point xi in the design space together with the latent the optimizer moves.
    `values` is always the transform of `latent` under `reparam`; build
    instances with ssm.reparam.transform_design.
    """
    values: np.ndarray
    reparam: Reparam
    latent: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_array(self.values))
        object.__setattr__(self, 'latent', _frozen_array(self.latent))
        object.__setattr__(self, 'reparam', Reparam(self.reparam))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def satisfies_constraints(self, tol: float = 1e-9) -> bool:
        """Check the invariant of the reparameterization tag"""
        if self.reparam is Reparam.SIMPLEX:
            return bool(
                np.all(self.values >= 0.0)
                and np.all(self.values <= 1.0)
                and abs(float(np.sum(self.values)) - 1.0) <= tol
            )
        if self.reparam is Reparam.ANGLE:
            return bool(np.all(self.values >= -np.pi) and np.all(self.values < np.pi))
        return bool(np.all(np.isfinite(self.values)))

    def to_dict(self) -> dict:
        return {
            'values': self.values.tolist(),
            'reparam': self.reparam.value,
            'latent': self.latent.tolist(),
        }


@dataclass(frozen=True)
class History:
    """h_t: the designs executed so far and the observations they produced"""
    designs: Tuple[DesignVector, ...] = field(default_factory=tuple)
    observations: Tuple[Observation, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.designs) != len(self.observations):
            raise InvalidArgumentError(
                f"History has {len(self.designs)} designs but {len(self.observations)} observations"
            )

    @property
    def length(self) -> int:
        return len(self.designs)

    def extend(self, design: DesignVector, observation: Observation) -> 'History':
        return History(self.designs + (design,), self.observations + (observation,))

    @classmethod
    def from_sequences(cls, designs: Sequence[DesignVector], observations: Sequence[Observation]):
        return cls(tuple(designs), tuple(observations))
