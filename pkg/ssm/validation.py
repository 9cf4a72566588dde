# validation.py
"""
Smoke checks of the model contract on random probes:
finite, strictly positive observation densities and gradient shapes.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import InvalidArgumentError
from .rng import as_stream

logger = logging.getLogger('badpods.models')


@dataclass(frozen=True)
class Violation:
    probe: int
    kind: str
    detail: str


@dataclass
class ValidationReport:
    model: str
    probes: int
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> dict:
        counts = {}
        for violation in self.violations:
            counts[violation.kind] = counts.get(violation.kind, 0) + 1
        return counts


def _check_gradient(report, probe, kind, gradient, design_dim):
    gradient = np.asarray(gradient)
    if gradient.ndim == 0 or gradient.shape[-1] != design_dim:
        report.violations.append(
            Violation(probe, kind, f"gradient shape {gradient.shape}, expected (..., {design_dim})")
        )
    elif not np.all(np.isfinite(gradient)):
        report.violations.append(Violation(probe, kind, "non-finite gradient"))


def validate_model(model, probes: int, rng) -> ValidationReport:
    """
    Draw `probes` (theta, x, xi, y) tuples from the model and check the contract.
    Boundary states supplied by the model are probed with every observation too.
    """
    if probes < 1:
        raise InvalidArgumentError(f"Probe budget must be >= 1, got {probes}")

    stream = as_stream(rng)
    report = ValidationReport(model=model.name, probes=probes)
    boundary = model.boundary_states()

    for probe in range(probes):
        gen = stream.child('probe', probe).generator()
        theta = model.sample_param_prior(1, gen)[0]
        x_prev = model.sample_state_prior((), gen)
        xi = model.sample_random_design(gen)
        x = model.sample_transition(x_prev, theta, xi.values, gen)
        y = model.sample_observation(x, theta, xi.values, gen)

        states = [x] + list(boundary)
        for state in states:
            with np.errstate(divide='ignore', invalid='ignore'):
                log_g = np.asarray(model.log_observation(y, state, theta, xi.values))
            if not np.all(np.isfinite(log_g)):
                report.violations.append(
                    Violation(probe, 'log_observation', f"non-finite log density at state {np.round(state, 4).tolist()}")
                )

        _check_gradient(
            report, probe, 'grad_xi_log_observation',
            model.grad_xi_log_observation(y, x, theta, xi.values), model.design_dim,
        )
        _check_gradient(
            report, probe, 'grad_xi_log_transition',
            model.grad_xi_log_transition(x, x_prev, theta, xi.values), model.design_dim,
        )

    if report.ok:
        logger.info(f"Model {model.name} passed {probes} probes")
    else:
        logger.warning(f"Model {model.name}: {len(report.violations)} violations {report.kinds()}")
    return report
