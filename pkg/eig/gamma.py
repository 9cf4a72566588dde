# gamma.py
"""
Outer samples for the EIG: reuse the posterior particles, draw one-step
predictive states and pseudo-observations at the candidate design.
"""

from dataclasses import dataclass

import numpy as np

from ssm.base import design_values
from ssm.exceptions import DegenerateWeightsError, InvalidArgumentError
from ssm.rng import as_stream


@dataclass(frozen=True)
class GammaSample:
    theta: np.ndarray
    prev_state: np.ndarray
    pred_state: np.ndarray
    pseudo_obs: np.ndarray
    weight: float


@dataclass(frozen=True)
class GammaBatch:
    """L samples stored column-wise; m_index/n_index locate each sample in the ensemble"""
    m_index: np.ndarray
    n_index: np.ndarray
    theta: np.ndarray
    prev_state: np.ndarray
    pred_state: np.ndarray
    pseudo_obs: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.weights.shape[0]

    def __getitem__(self, i) -> GammaSample:
        return GammaSample(
            theta=self.theta[i],
            prev_state=self.prev_state[i],
            pred_state=self.pred_state[i],
            pseudo_obs=self.pseudo_obs[i],
            weight=float(self.weights[i]),
        )


def sample_gamma(ens, xi, model, batch: int, rng) -> GammaBatch:
    """
    Draw `batch` samples. With batch = M*N every (m, n) pair is used once and
    w_y = w_theta w_x; a smaller batch is a uniform subsample without
    replacement with the weights renormalised.
    """
    total = ens.M * ens.N
    if not 1 <= batch <= total:
        raise InvalidArgumentError(f"Gamma batch must lie in [1, M*N={total}], got {batch}")
    stream = as_stream(rng)
    xi = design_values(xi)

    if batch == total:
        flat = np.arange(total)
    else:
        flat = np.sort(stream.child('subsample').generator().choice(total, size=batch, replace=False))
    m_index, n_index = np.divmod(flat, ens.N)

    weights = ens.joint_weights.ravel()[flat]
    weight_sum = weights.sum()
    if not weight_sum > 0:
        raise DegenerateWeightsError("Gamma subsample carries no posterior weight", level='parameter')

    theta = ens.params[m_index]
    prev_state = ens.states[m_index, n_index]
    pred_state = model.sample_transition(prev_state, theta, xi, stream.child('states').generator())
    pseudo_obs = model.sample_observation(pred_state, theta, xi, stream.child('obs').generator())
    return GammaBatch(
        m_index=m_index,
        n_index=n_index,
        theta=theta,
        prev_state=prev_state,
        pred_state=pred_state,
        pseudo_obs=np.asarray(pseudo_obs, dtype=float),
        weights=weights / weight_sum,
    )
