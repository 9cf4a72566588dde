# npf.py
"""
Nested particle filter update.

One step, in order:
  1. jitter every parameter particle
  2. propagate each inner bank through f at its jittered theta
  3. weight the states by g and normalise within each bank
  4. resample the states of each bank
  5. weight parameters by w_theta,t-1 * sum_n w_x g, normalise
  6. resample parameters, each carrying its whole bank

Steps 2-4 are the bootstrap particle filter step, run for all banks at once.
All weights are handled in log space.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ssm.base import design_values
from ssm.exceptions import DegenerateWeightsError, NumericError
from ssm.rng import as_stream

from .ensemble import NestedEnsemble
from .jitter import JitterKernel, jitter
from .resampling import resample, resample_rows

logger = logging.getLogger('badpods.inference')

LOG_WEIGHT_FLOOR = -700.0


def observation_values(y) -> np.ndarray:
    return np.atleast_1d(np.asarray(getattr(y, 'values', y), dtype=float))


def _log(weights) -> np.ndarray:
    with np.errstate(divide='ignore'):
        return np.log(np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class BankUpdate:
    """Result of a bootstrap step over one or more banks"""
    states: np.ndarray        # resampled states
    weights: np.ndarray       # uniform after resampling
    log_evidence: np.ndarray  # log sum_n w_{t-1} g per bank
    filter_mean: np.ndarray   # weighted mean of the propagated states, before resampling
    ess: np.ndarray           # effective sample size of the normalised weights


def bootstrap_step(states, weights, theta, y, xi, model, rng, scheme='systematic', strict=True) -> BankUpdate:
    """
    Propagate, weight and resample a bank of state particles at fixed theta.

    Accepts a single bank (states (N, d_x), weights (N,), theta (d_theta,)) or a
    stack of banks with a leading axis. With strict=True a bank whose log
    weights all fall below the floor raises DegenerateWeightsError; otherwise
    such banks are reported through their log evidence and left to the caller.
    """
    stream = as_stream(rng)
    states = np.asarray(states, dtype=float)
    single = states.ndim == 2
    if single:
        states, weights, theta = states[None], np.asarray(weights)[None], np.asarray(theta)[None]
    theta = np.asarray(theta, dtype=float)[:, None, :]
    xi = design_values(xi)
    y = observation_values(y)
    n = states.shape[1]

    propagated = model.sample_transition(states, theta, xi, stream.child('propagate').generator())
    log_g = model.log_observation(y, propagated, theta, xi)
    if np.any(np.isnan(log_g)):
        bank, particle = np.argwhere(np.isnan(log_g))[0]
        raise NumericError("Observation log density is NaN", term='observation', index=(int(bank), int(particle)))

    log_w = _log(weights) + log_g
    peak = log_w.max(axis=1)
    below = peak < LOG_WEIGHT_FLOOR
    if strict and np.any(below):
        bank = int(np.argmax(below))
        raise DegenerateWeightsError(
            f"State weights of bank {bank} underflow (max log weight {peak[bank]:.1f})", level='state', index=bank
        )

    alive = np.isfinite(peak)
    safe = np.where(alive[:, None], log_w, 0.0)
    log_norm = logsumexp(safe, axis=1)
    log_evidence = np.where(alive, log_norm, -np.inf)
    normalised = np.where(alive[:, None], np.exp(safe - log_norm[:, None]), 1.0 / n)
    filter_mean = np.einsum('bn,bnd->bd', normalised, propagated)
    ess = 1.0 / np.sum(normalised ** 2, axis=1)

    ancestors = resample_rows(normalised, n, scheme, stream.child('resample'))
    resampled = np.take_along_axis(propagated, ancestors[..., None], axis=1)
    uniform = np.full(resampled.shape[:2], 1.0 / n)

    if single:
        return BankUpdate(resampled[0], uniform[0], log_evidence[0], filter_mean[0], ess[0])
    return BankUpdate(resampled, uniform, log_evidence, filter_mean, ess)


@dataclass(frozen=True)
class NpfDiagnostics:
    param_ess: float          # of the pre-resampling parameter weights
    param_mean: np.ndarray
    state_mean: np.ndarray    # filtering mean under the joint weights
    log_evidence: float       # log of the one-step predictive likelihood estimate
    dead_banks: int


def npf_update(ens: NestedEnsemble, y, xi, model, kernel: JitterKernel, rng, scheme='systematic'):
    """One nested filter step; returns (ensemble, diagnostics)"""
    stream = as_stream(rng)
    theta = jitter(ens.params, kernel, stream.child('jitter'))
    banks = bootstrap_step(
        ens.states, ens.state_weights, theta, y, xi, model, stream.child('banks'), scheme, strict=False
    )

    log_w = _log(ens.param_weights) + banks.log_evidence
    peak = log_w.max()
    if not peak >= LOG_WEIGHT_FLOOR:
        raise DegenerateWeightsError(
            f"Parameter weights underflow at t={ens.t + 1} (max log weight {peak:.1f})", level='parameter'
        )
    log_total = logsumexp(log_w)
    param_weights = np.exp(log_w - log_total)
    dead = int(np.sum(banks.log_evidence < LOG_WEIGHT_FLOOR))
    if dead:
        logger.debug(f"t={ens.t + 1}: {dead}/{ens.M} banks below the weight floor")

    ess = float(1.0 / np.sum(param_weights ** 2))
    diagnostics = NpfDiagnostics(
        param_ess=ess,
        param_mean=param_weights @ theta,
        state_mean=param_weights @ banks.filter_mean,
        log_evidence=float(log_total),
        dead_banks=dead,
    )

    ancestors = resample(param_weights, ens.M, scheme, stream.child('resample'))
    updated = NestedEnsemble(
        params=theta[ancestors],
        param_weights=np.full(ens.M, 1.0 / ens.M),
        states=banks.states[ancestors],
        state_weights=banks.weights[ancestors],
        t=ens.t + 1,
    )
    return updated, diagnostics


def npf_step(ens: NestedEnsemble, y, xi, model, kernel: JitterKernel, rng, scheme='systematic') -> NestedEnsemble:
    return npf_update(ens, y, xi, model, kernel, rng, scheme)[0]
