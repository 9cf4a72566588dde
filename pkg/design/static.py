# static.py
"""
Static (non-adaptive) design: the whole sequence xi_1..xi_T is optimised
before any data is collected.

Objective: sum over t of the one-step EIG at xi_t, where the ensemble at t is
the prior ensemble filtered through t-1 pseudo-observations. Each iteration
draws a fresh pseudo-truth (theta, x_0) from the prior, rolls it forward under
the current designs and conditions the ensemble on what it emits. The EIG
gradients of all steps are stacked into one latent vector for Adam; the
dependence of later ensembles on earlier designs is not differentiated.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.conf import settings

from eig.estimators import eig_grad_hat
from filtering.npf import npf_step
from ssm.exceptions import BudgetExceededError, DegenerateWeightsError, InvalidArgumentError, NumericError
from ssm.reparam import latent_dimension, latent_gradient, transform_design
from ssm.rng import as_stream
from ssm.types import DesignVector

from .adam import AdamState, adam_step
from .optimizer import wrap_latent
from .policies import SearchBudget

logger = logging.getLogger('badpods.design')


@dataclass(frozen=True)
class StaticResult:
    designs: Tuple[DesignVector, ...]
    trace: np.ndarray        # summed EIG estimate per iteration
    truncated_rollouts: int  # iterations whose rollout hit degenerate weights


def static_cost(T: int, M: int, N: int, budget: SearchBudget) -> float:
    """Observation-density evaluations for a full static optimisation"""
    return float(budget.K) * T * budget.batch * (N + M * N)


def _step_stream(stream, name, k, t):
    # step 1 uses the single-design layout, so T = 1 matches optimize_design
    if t == 1:
        return stream.child(name, k) if k is not None else stream.child(name)
    return stream.child(name, k, 'step', t) if k is not None else stream.child(name, t)


def static_optimize(model, prior, T: int, budget: SearchBudget, rng, *, kernel,
                    scheme='systematic', cap: Optional[float] = None,
                    init: Optional[Tuple[DesignVector, ...]] = None) -> StaticResult:
    """Jointly optimise T designs against prior-predictive rollouts"""
    if T < 1:
        raise InvalidArgumentError(f"Static horizon must be at least 1, got {T}")
    if budget.K < 1:
        raise InvalidArgumentError(f"K must be at least 1, got {budget.K}")
    cap = cap if cap is not None else settings.STATIC_COST_CAP
    cost = static_cost(T, prior.M, prior.N, budget)
    if cost > cap:
        logger.warning(f"Static optimisation refused: cost {cost:.3g} exceeds cap {cap:.3g} (T={T})")
        raise BudgetExceededError(
            f"Static optimisation over T={T} needs {cost:.3g} density evaluations, cap is {cap:.3g}",
            cost=cost, cap=cap,
        )

    stream = as_stream(rng)
    width = latent_dimension(model.reparam, model.design_dim)
    if init is None:
        init = [model.sample_random_design(_step_stream(stream, 'init', None, t).generator()) for t in range(1, T + 1)]
    elif len(init) != T:
        raise InvalidArgumentError(f"Static init holds {len(init)} designs for T={T}")
    latent = np.concatenate([np.asarray(d.latent, dtype=float) for d in init])

    state = AdamState.initial(latent.size, budget.adam)
    trace = []
    truncated = 0
    for k in range(budget.K):
        designs = [transform_design(chunk, model.reparam, model.design_dim) for chunk in latent.reshape(T, width)]
        gradient = np.zeros_like(latent)
        total = 0.0
        try:
            rollout = _Rollout(model, prior, stream.child('rollout', k), kernel, scheme) if T > 1 else None
            ens = prior
            for t, design in enumerate(designs, start=1):
                estimate = eig_grad_hat(ens, design, model, kernel, budget.batch, _step_stream(stream, 'iteration', k, t))
                total += estimate.value
                gradient[(t - 1) * width:t * width] = latent_gradient(design, estimate.gradient)
                if t < T:
                    try:
                        ens = rollout.advance(ens, design, t)
                    except DegenerateWeightsError as e:
                        truncated += 1
                        logger.warning(f"Static rollout at iteration {k} truncated after t={t}: {e}")
                        break
            state, update = adam_step(state, gradient)
        except NumericError as e:
            raise NumericError(
                f"Static optimisation aborted at iteration {k}: {e}",
                term=e.term, index=e.index, trace=np.array(trace),
            ) from e
        trace.append(total)
        latent = np.concatenate([wrap_latent(chunk, model.reparam) for chunk in (latent + update).reshape(T, width)])
        logger.debug(f"static k={k} sum I={total:.5f}")

    designs = tuple(transform_design(chunk, model.reparam, model.design_dim) for chunk in latent.reshape(T, width))
    logger.info(f"Static optimisation over T={T} done, final sum I={trace[-1]:.4f}, {truncated} truncated rollouts")
    return StaticResult(designs=designs, trace=np.array(trace), truncated_rollouts=truncated)


class _Rollout:
    """A pseudo-truth drawn from the prior and the stream it is simulated with"""

    def __init__(self, model, prior, stream, kernel, scheme):
        gen = stream.child('truth').generator()
        self.model = model
        self.theta = model.sample_param_prior(1, gen)[0]
        self.state = model.sample_state_prior(1, gen)[0]
        self.stream = stream
        self.kernel = kernel
        self.scheme = scheme

    def advance(self, ens, design, t):
        self.state = self.model.sample_transition(
            self.state, self.theta, design.values, self.stream.child('state', t).generator()
        )
        y = self.model.sample_observation(self.state, self.theta, design.values, self.stream.child('obs', t).generator())
        return npf_step(ens, y, design, self.model, self.kernel, self.stream.child('filter', t), self.scheme)
