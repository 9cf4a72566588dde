# estimators.py
"""
Nested Monte Carlo estimators of the expected information gain and its design gradient.

For outer samples (theta_l, x_l, x~_l, y~_l) with weights w_l:

    L^(y)  = sum_j w_x^(m,j) g(y | x..^(m,j), theta^(m), xi)          own-theta likelihood
    Z^(y)  = sum_i sum_j w_theta^(i) w_x^(i,j) g(y | x.^(i,j), theta.^(i), xi)   evidence
    I^     = sum_l w_l [log L^(y~_l) - log Z^(y~_l)]
    grad I^ = sum_l w_l [grad L^/L^ - grad Z^/Z^ + (log L^ - log Z^)(grad log f + grad log g)]

grad L^ and grad Z^ use grad g = g grad log g. Propagated inner particles are
drawn once per call and shared by every y; the evidence particles use the same
propagation stream as the likelihood particles (common random numbers).
Everything is accumulated in log space.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.conf import settings
from scipy.special import logsumexp

from filtering.jitter import jitter
from filtering.npf import observation_values
from ssm.base import design_values
from ssm.exceptions import InvalidArgumentError, NumericError
from ssm.rng import as_stream

from .gamma import GammaBatch, sample_gamma

logger = logging.getLogger('badpods.inference')

LOG_DENSITY_FLOOR = -700.0


# ========================================================================
# INNER PARTICLE SETS
# ========================================================================

@dataclass(frozen=True)
class LikelihoodParticles:
    """x..^(m,j) ~ f(. | x^(m,j), theta^(m), xi), one bank per parameter particle"""
    params: np.ndarray       # (M, d_theta)
    prev_states: np.ndarray  # (M, N, d_x)
    states: np.ndarray       # (M, N, d_x)
    log_weights: np.ndarray  # (M, N), log w_x


@dataclass(frozen=True)
class EvidenceParticles:
    """Jittered theta.^(i) and x.^(i,j) ~ f(. | x^(i,j), theta.^(i), xi)"""
    params: np.ndarray
    prev_states: np.ndarray
    states: np.ndarray
    log_weights: np.ndarray  # (M, N), log w_theta w_x


def _log(weights):
    with np.errstate(divide='ignore'):
        return np.log(weights)


def propagate_likelihood(ens, xi, model, rng) -> LikelihoodParticles:
    stream = as_stream(rng)
    xi = design_values(xi)
    states = model.sample_transition(
        ens.states, ens.params[:, None, :], xi, stream.child('propagate').generator()
    )
    return LikelihoodParticles(ens.params, ens.states, states, _log(ens.state_weights))


def propagate_evidence(ens, xi, model, kernel, rng) -> EvidenceParticles:
    stream = as_stream(rng)
    xi = design_values(xi)
    params = jitter(ens.params, kernel, stream.child('jitter'))
    states = model.sample_transition(
        ens.states, params[:, None, :], xi, stream.child('propagate').generator()
    )
    return EvidenceParticles(params, ens.states, states, _log(ens.joint_weights))


# ========================================================================
# LOG-SPACE KERNELS
# ========================================================================

def _floored(log_density, counter):
    log_density = np.asarray(log_density, dtype=float)
    if np.any(np.isnan(log_density)):
        index = tuple(int(i) for i in np.argwhere(np.isnan(log_density))[0])
        raise NumericError("Observation log density is NaN", term='density', index=index)
    below = log_density < LOG_DENSITY_FLOOR
    counter[0] += int(np.sum(below))
    return np.maximum(log_density, LOG_DENSITY_FLOOR), below


def _floored_score(score, below):
    """The floor is constant in xi"""
    return np.where(below[..., None], 0.0, score)


def _mixture(log_weights, log_g, score_g, score_f):
    """
    log sum_k exp(log_weights + log_g) over the last axis, and when scores are
    given the posterior-weighted score sum_k pi_k (score_g + score_f)
    (= grad of the sum divided by the sum).
    """
    log_terms = log_weights + log_g
    log_sum = logsumexp(log_terms, axis=-1)
    if score_g is None:
        return log_sum, None
    pi = np.exp(log_terms - log_sum[..., None])
    return log_sum, np.einsum('...k,...kd->...d', pi, score_g + score_f)


def _likelihood_terms(y, m_index, particles: LikelihoodParticles, xi, model, gradient, counter):
    """log L^ for each y (rows) at its own parameter particle; y (L, d_y), m_index (L,)"""
    states = particles.states[m_index]
    theta = particles.params[m_index][:, None, :]
    log_g, below = _floored(model.log_observation(y[:, None, :], states, theta, xi), counter)
    score_g = score_f = None
    if gradient:
        score_g = _floored_score(model.grad_xi_log_observation(y[:, None, :], states, theta, xi), below)
        score_f = model.grad_xi_log_transition(states, particles.prev_states[m_index], theta, xi)
    return _mixture(particles.log_weights[m_index], log_g, score_g, score_f)


def _evidence_terms(y, particles: EvidenceParticles, score_f, xi, model, gradient, counter):
    """log Z^ for each y (rows) over all M*N evidence particles"""
    d_x = particles.states.shape[-1]
    states = particles.states.reshape(1, -1, d_x)
    n = particles.states.shape[1]
    theta = np.repeat(particles.params, n, axis=0)[None]
    log_g, below = _floored(model.log_observation(y[:, None, :], states, theta, xi), counter)
    score_g = None
    if gradient:
        score_g = _floored_score(model.grad_xi_log_observation(y[:, None, :], states, theta, xi), below)
    return _mixture(particles.log_weights.reshape(1, -1), log_g, score_g, score_f)


def _evidence_transition_score(particles: EvidenceParticles, xi, model):
    theta = particles.params[:, None, :]
    score = model.grad_xi_log_transition(particles.states, particles.prev_states, theta, xi)
    return score.reshape(1, -1, score.shape[-1])


# ========================================================================
# COMPONENT ESTIMATORS
# ========================================================================

def _as_rows(y, model) -> np.ndarray:
    y = observation_values(y)
    return y.reshape(-1, model.obs_dim)


def _check_m(m_index, ens):
    if not 0 <= m_index < ens.M:
        raise InvalidArgumentError(f"Parameter index {m_index} outside [0, {ens.M})")


def likelihood_hat(y, m_index: int, ens, xi, model, rng, particles: Optional[LikelihoodParticles] = None) -> float:
    """L^(y) for parameter particle m (a density value, not its log)"""
    _check_m(m_index, ens)
    xi = design_values(xi)
    particles = particles or propagate_likelihood(ens, xi, model, rng)
    log_l, _ = _likelihood_terms(_as_rows(y, model), np.array([m_index]), particles, xi, model, False, [0])
    return float(np.exp(log_l[0]))


def likelihood_grad_hat(y, m_index: int, ens, xi, model, rng, particles: Optional[LikelihoodParticles] = None) -> np.ndarray:
    """grad_xi L^(y) = sum_j w_x [grad g + g grad log f]"""
    _check_m(m_index, ens)
    xi = design_values(xi)
    particles = particles or propagate_likelihood(ens, xi, model, rng)
    log_l, score = _likelihood_terms(_as_rows(y, model), np.array([m_index]), particles, xi, model, True, [0])
    return np.exp(log_l[0]) * score[0]


def evidence_hat(y, ens, xi, model, kernel, rng, particles: Optional[EvidenceParticles] = None) -> float:
    xi = design_values(xi)
    particles = particles or propagate_evidence(ens, xi, model, kernel, rng)
    log_z, _ = _evidence_terms(_as_rows(y, model), particles, None, xi, model, False, [0])
    return float(np.exp(log_z[0]))


def evidence_grad_hat(y, ens, xi, model, kernel, rng, particles: Optional[EvidenceParticles] = None) -> np.ndarray:
    xi = design_values(xi)
    particles = particles or propagate_evidence(ens, xi, model, kernel, rng)
    score_f = _evidence_transition_score(particles, xi, model)
    log_z, score = _evidence_terms(_as_rows(y, model), particles, score_f, xi, model, True, [0])
    return np.exp(log_z[0]) * score[0]


# ========================================================================
# EIG
# ========================================================================

@dataclass(frozen=True)
class EigDiagnostics:
    batch: int
    M: int
    N: int
    log_likelihood_range: tuple
    log_evidence_range: tuple
    floor_hits: int = 0


@dataclass(frozen=True)
class EigEstimate:
    value: float
    gradient: Optional[np.ndarray]
    diagnostics: EigDiagnostics
    log_ratios: np.ndarray = field(repr=False, default=None)


def _attribute(terms: dict):
    for term, values in terms.items():
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if not np.all(np.isfinite(values)):
            index = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0])
            raise NumericError(f"Non-finite {term} in the EIG estimate", term=term, index=index)


def nested_estimate(gamma: GammaBatch, likelihood: LikelihoodParticles, evidence: EvidenceParticles,
                    xi, model, gradient: bool = True, chunk: Optional[int] = None) -> EigEstimate:
    """EIG value (and gradient) from fixed outer samples and inner particle sets"""
    xi = design_values(xi)
    chunk = chunk or getattr(settings, 'EIG_CHUNK_SIZE', 64)
    count = len(gamma)
    counter = [0]
    log_l = np.empty(count)
    log_z = np.empty(count)
    score_l = np.zeros((count, xi.shape[0])) if gradient else None
    score_z = np.zeros((count, xi.shape[0])) if gradient else None
    score_f = _evidence_transition_score(evidence, xi, model) if gradient else None

    for start in range(0, count, chunk):
        rows = slice(start, min(start + chunk, count))
        y = gamma.pseudo_obs[rows]
        log_l[rows], s_l = _likelihood_terms(y, gamma.m_index[rows], likelihood, xi, model, gradient, counter)
        log_z[rows], s_z = _evidence_terms(y, evidence, score_f, xi, model, gradient, counter)
        if gradient:
            score_l[rows], score_z[rows] = s_l, s_z

    log_ratios = log_l - log_z
    value = float(np.dot(gamma.weights, log_ratios))
    _attribute({'L-term': log_l, 'Z-term': log_z, 'value': value})

    estimate_gradient = None
    if gradient:
        design_score = (
            model.grad_xi_log_transition(gamma.pred_state, gamma.prev_state, gamma.theta, xi)
            + model.grad_xi_log_observation(gamma.pseudo_obs, gamma.pred_state, gamma.theta, xi)
        )
        _attribute({'L-term': score_l, 'Z-term': score_z, 'score-term': design_score})
        per_sample = score_l - score_z + log_ratios[:, None] * design_score
        estimate_gradient = gamma.weights @ per_sample
        _attribute({'gradient': estimate_gradient})

    if counter[0]:
        logger.debug(f"EIG estimate: {counter[0]} log densities clamped at {LOG_DENSITY_FLOOR}")
    diagnostics = EigDiagnostics(
        batch=count,
        M=likelihood.states.shape[0],
        N=likelihood.states.shape[1],
        log_likelihood_range=(float(log_l.min()), float(log_l.max())),
        log_evidence_range=(float(log_z.min()), float(log_z.max())),
        floor_hits=counter[0],
    )
    return EigEstimate(value=value, gradient=estimate_gradient, diagnostics=diagnostics, log_ratios=log_ratios)


def _draw(ens, xi, model, kernel, batch, rng, gamma):
    stream = as_stream(rng)
    if gamma is None:
        gamma = sample_gamma(ens, xi, model, batch, stream.child('gamma'))
    likelihood = propagate_likelihood(ens, xi, model, stream.child('inner'))
    evidence = propagate_evidence(ens, xi, model, kernel, stream.child('inner'))
    return gamma, likelihood, evidence


def eig_grad_hat(ens, xi, model, kernel, batch: int, rng, gamma: Optional[GammaBatch] = None) -> EigEstimate:
    """Value and gradient from one set of outer samples and inner particles"""
    xi = design_values(xi)
    gamma, likelihood, evidence = _draw(ens, xi, model, kernel, batch, rng, gamma)
    return nested_estimate(gamma, likelihood, evidence, xi, model, gradient=True)


def eig_hat(ens, xi, model, kernel, batch: int, rng, gamma: Optional[GammaBatch] = None) -> float:
    """Same draws as eig_grad_hat, value only"""
    xi = design_values(xi)
    gamma, likelihood, evidence = _draw(ens, xi, model, kernel, batch, rng, gamma)
    return nested_estimate(gamma, likelihood, evidence, xi, model, gradient=False).value
