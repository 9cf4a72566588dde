# policies.py
"""
Design policies compared by the harness:

  badpods  optimise the EIG against the current posterior at every step
  random   uniform draw over the constraint set
  static   a sequence fixed before any data is seen
  fixed    the model's constant design
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from ssm.exceptions import InvalidArgumentError
from ssm.rng import as_generator, as_stream
from ssm.types import DesignVector

from .adam import AdamConfig
from .optimizer import optimize_design


class PolicyTag(str, Enum):
    BADPODS = 'badpods'
    RANDOM = 'random'
    STATIC = 'static'
    FIXED = 'fixed'


@dataclass(frozen=True)
class SearchBudget:
    """How hard the optimising policy works per timestep"""
    K: int
    batch: int
    adam: AdamConfig = field(default_factory=AdamConfig)
    restarts: int = 1
    restart_iterations: int = 20


def random_design(model, rng) -> DesignVector:
    return model.sample_random_design(as_generator(rng))


@dataclass(frozen=True)
class DesignPolicy:
    tag: PolicyTag
    static_designs: Tuple[DesignVector, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'tag', PolicyTag(self.tag))
        if self.tag is PolicyTag.STATIC and not self.static_designs:
            raise InvalidArgumentError("A static policy needs its precomputed designs")
        object.__setattr__(self, 'static_designs', tuple(self.static_designs))

    @classmethod
    def static(cls, designs: Sequence[DesignVector]) -> 'DesignPolicy':
        return cls(PolicyTag.STATIC, tuple(designs))

    @classmethod
    def static_from_values(cls, model, values) -> 'DesignPolicy':
        return cls.static([model.design_from_values(row) for row in np.atleast_2d(values)])

    def check_horizon(self, horizon: int):
        if self.tag is PolicyTag.STATIC and len(self.static_designs) != horizon:
            raise InvalidArgumentError(
                f"Static policy holds {len(self.static_designs)} designs for a horizon of {horizon}"
            )

    def propose(self, t: int, ens, model, kernel, rng, budget: Optional[SearchBudget] = None):
        """
        Design for timestep t (1-based) and the optimiser trace (empty unless
        the policy optimises).
        """
        if self.tag is PolicyTag.RANDOM:
            return random_design(model, rng), np.empty(0)
        if self.tag is PolicyTag.FIXED:
            return model.fixed_design(), np.empty(0)
        if self.tag is PolicyTag.STATIC:
            if not 1 <= t <= len(self.static_designs):
                raise InvalidArgumentError(f"No static design for t={t}")
            return self.static_designs[t - 1], np.empty(0)

        if budget is None:
            raise InvalidArgumentError("The badpods policy needs a search budget")
        result = optimize_design(
            ens, model, kernel, budget.K, budget.adam, as_stream(rng),
            batch=budget.batch, restarts=budget.restarts, restart_iterations=budget.restart_iterations,
        )
        return result.design, result.trace
