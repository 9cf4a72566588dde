# optimizer.py
"""
Stochastic gradient ascent on the EIG over the latent design.

Each iteration draws a fresh estimate of the EIG gradient at the current
design, maps it to the latent through the reparameterization Jacobian and
applies an Adam update. Angle latents are wrapped after every update so the
latent stays bounded; the design values are unchanged by the wrap.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from eig.estimators import eig_grad_hat
from ssm.exceptions import InvalidArgumentError, NumericError
from ssm.reparam import latent_gradient, transform_design, wrap_pi
from ssm.rng import as_stream
from ssm.types import DesignVector, Reparam

from .adam import AdamConfig, AdamState, adam_step

logger = logging.getLogger('badpods.design')


@dataclass(frozen=True)
class OptimizationResult:
    design: DesignVector
    trace: np.ndarray     # EIG estimate at each of the K evaluated iterates
    latents: np.ndarray   # (K + 1, d_latent), initial latent first
    restart_values: Optional[np.ndarray] = None


def wrap_latent(latent, reparam) -> np.ndarray:
    if Reparam(reparam) is Reparam.ANGLE:
        return wrap_pi(latent)
    return np.asarray(latent, dtype=float)


def _ascend(ens, model, kernel, latent, K, adam_config, stream, batch, estimator):
    state = AdamState.initial(latent.shape[0], adam_config)
    trace = []
    latents = [latent.copy()]
    for k in range(K):
        design = transform_design(latent, model.reparam, model.design_dim)
        try:
            estimate = estimator(ens, design, model, kernel, batch, stream.child('iteration', k))
            gradient = latent_gradient(design, estimate.gradient)
            state, update = adam_step(state, gradient)
        except NumericError as e:
            logger.warning(f"SGA aborted at iteration {k}/{K}: {e}")
            raise NumericError(
                f"Design optimisation aborted at iteration {k}: {e}",
                term=e.term, index=e.index, trace=np.array(trace),
            ) from e
        trace.append(estimate.value)
        latent = wrap_latent(latent + update, model.reparam)
        latents.append(latent.copy())
        logger.debug(f"k={k} I={estimate.value:.5f} xi={np.round(design.values, 4).tolist()}")
    return latent, np.array(trace), np.array(latents)


def optimize_design(ens, model, kernel, K: int, adam: Optional[AdamConfig], rng, *, batch: int,
                    init: Optional[DesignVector] = None, estimator: Callable = eig_grad_hat,
                    restarts: int = 1, restart_iterations: int = 20) -> OptimizationResult:
    """
    Run K Adam steps from a random (or given) initial design.

    With restarts > 1 each of `restarts` random initial designs first gets
    `restart_iterations` steps; the one with the highest final estimate seeds
    the main run. `estimator(ens, xi, model, kernel, batch, rng)` must return
    an object with `value` and `gradient`.
    """
    if K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {K}")
    if restarts < 1:
        raise InvalidArgumentError(f"restarts must be at least 1, got {restarts}")
    stream = as_stream(rng)
    adam = adam or AdamConfig()

    restart_values = None
    if init is not None:
        latent = np.asarray(init.latent, dtype=float)
    elif restarts == 1:
        latent = model.sample_random_design(stream.child('init').generator()).latent
    else:
        candidates = []
        restart_values = np.empty(restarts)
        for r in range(restarts):
            sub = stream.child('restart', r)
            start = model.sample_random_design(sub.child('init').generator()).latent
            end, trace, _ = _ascend(ens, model, kernel, start, restart_iterations, adam, sub, batch, estimator)
            candidates.append(end)
            restart_values[r] = trace[-1] if trace.size else -np.inf
        best = int(np.argmax(restart_values))
        logger.debug(f"Multi-start picked restart {best} (I={restart_values[best]:.5f})")
        latent = candidates[best]

    latent, trace, latents = _ascend(ens, model, kernel, np.array(latent, dtype=float), K, adam, stream, batch, estimator)
    design = transform_design(latent, model.reparam, model.design_dim)
    return OptimizationResult(design=design, trace=trace, latents=latents, restart_values=restart_values)
