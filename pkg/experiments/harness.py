# harness.py
"""
Sequential experiment: design, observe, evaluate, update.

Random streams per seed:
    truth/state/t    ground-truth state noise (shared by every policy)
    truth/obs/t      ground-truth observation noise (shared; the draw depends on the design)
    init             prior ensemble
    policy/t         design choice (optimiser or random draw)
    evaluate/t       EIG of the chosen design at the evaluation budget
    filter/t         nested filter update
"""

import json
import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm

from design.policies import DesignPolicy, PolicyTag
from eig.estimators import eig_hat
from filtering.ensemble import init_ensemble, posterior_summary
from filtering.jitter import JitterKernel
from filtering.npf import npf_update
from ssm.exceptions import BadpodsError, InvalidArgumentError, ExperimentFailure
from ssm.rng import RngStream
from testbeds.registry import build_model

from .config import ExperimentConfig
from .records import RunRecord, StepRecord

logger = logging.getLogger('badpods.experiments')


# ========================================================================
# STATIC DESIGN FILES
# ========================================================================

def save_static_designs(path, designs, config: ExperimentConfig, trace=None) -> Path:
    """Write an optimised design sequence in the form `load_static_policy` reads"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'name': config.name,
        'config_hash': config.config_hash(),
        'horizon': len(designs),
        'designs': [np.asarray(d.values).tolist() for d in designs],
        'trace': [] if trace is None else np.asarray(trace).tolist(),
    }
    path.write_text(json.dumps(payload, indent=2) + '\n', encoding='utf-8')
    return path


def load_static_policy(path, model, horizon: int) -> DesignPolicy:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"Static design file {path} does not exist")
    payload = json.loads(path.read_text(encoding='utf-8'))
    policy = DesignPolicy.static_from_values(model, payload['designs'])
    policy.check_horizon(horizon)
    return policy


def build_policy(config: ExperimentConfig, model) -> DesignPolicy:
    if config.policy is PolicyTag.STATIC:
        return load_static_policy(config.static_designs, model, config.horizon)
    return DesignPolicy(config.policy)


# ========================================================================
# SEQUENTIAL RUN
# ========================================================================

def _empty_record(config: ExperimentConfig, model, policy: DesignPolicy, seed: int) -> RunRecord:
    return RunRecord(
        name=config.name,
        model=model.name,
        policy=policy.tag.value,
        seed=seed,
        config_hash=config.config_hash(),
        horizon=config.horizon,
        M=config.M,
        N=config.N,
        eval_batch=config.evaluation_batch,
        K=config.K,
        batch=config.outer_batch,
    )


def run_sequential(config: ExperimentConfig, seed: int, policy: Optional[DesignPolicy] = None,
                   model=None, progress: bool = False) -> RunRecord:
    """
    Run one seed of the experiment described by `config`.

    On a filter or numeric failure the partial record (status 'failed') is
    attached to the ExperimentFailure raised.
    """
    model = model or build_model(config.model)
    policy = policy or build_policy(config, model)
    policy.check_horizon(config.horizon)
    kernel = JitterKernel.for_model(model, config.jitter_scale, config.M)
    budget = config.search_budget
    root = RngStream(seed)
    truth = root.child('truth')

    record = _empty_record(config, model, policy, seed)
    theta_true = np.asarray(model.true_params(), dtype=float)
    state = np.asarray(model.initial_true_state(), dtype=float)
    ens = init_ensemble(model, config.M, config.N, root.child('init'))
    teig = 0.0

    logger.info(f"{config.name}: {policy.tag.value} seed={seed} T={config.horizon} M={config.M} N={config.N}")
    steps = tqdm(range(1, config.horizon + 1), desc=f"{policy.tag.value} seed {seed}", disable=not progress)
    for t in steps:
        started = time.perf_counter()
        try:
            design, _ = policy.propose(t, ens, model, kernel, root.child('policy', t), budget)
            state = model.sample_transition(state, theta_true, design.values, truth.child('state', t).generator())
            y = np.atleast_1d(model.sample_observation(
                state, theta_true, design.values, truth.child('obs', t).generator()
            ))
            eig = eig_hat(ens, design, model, kernel, config.evaluation_batch, root.child('evaluate', t))
            ens, diagnostics = npf_update(ens, y, design, model, kernel, root.child('filter', t), config.resampling)
        except BadpodsError as e:
            record.status = 'failed'
            record.failure = f"t={t}: {type(e).__name__}: {e}"
            logger.error(f"{config.name}: {policy.tag.value} seed={seed} failed at t={t}: {e}")
            raise ExperimentFailure(f"Seed {seed} failed at t={t}: {e}", record=record, cause=e) from e

        summary = posterior_summary(ens)
        teig += eig
        pointing = model.pointing_error(design, state)
        record.steps.append(StepRecord(
            t=t,
            design=np.array(design.values),
            observation=y,
            true_state=np.array(state),
            eig=float(eig),
            teig=float(teig),
            param_mean=summary.param_mean,
            param_var=np.diag(summary.param_cov).copy(),
            param_ess=diagnostics.param_ess,
            param_rmse=float(np.linalg.norm(summary.param_mean - theta_true)),
            state_rmse=float(np.linalg.norm(diagnostics.state_mean - state)),
            log_evidence=diagnostics.log_evidence,
            pointing_error=None if pointing is None else np.asarray(pointing, dtype=float),
            wall_time=time.perf_counter() - started,
        ))
        logger.debug(f"seed={seed} t={t} eig={eig:.4f} teig={teig:.4f} ess={diagnostics.param_ess:.1f}")

    logger.info(f"{config.name}: {policy.tag.value} seed={seed} done, TEIG={teig:.4f}")
    return record
