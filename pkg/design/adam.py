# adam.py
"""
Adam in ascent form. The optimizer keeps no hidden state: every step takes an
AdamState and returns the next one together with the latent update, so a
sequence of gradients always reproduces the same sequence of iterates.
"""

from dataclasses import dataclass, replace
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ssm.exceptions import InvalidArgumentError, NumericError


class AdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    alpha: float = Field(0.03, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-6, gt=0)
    schedule: Literal['constant', 'exponential'] = 'constant'
    decay: float = Field(0.99, gt=0, le=1)
    # Per-coordinate bound on |update|; None disables clipping
    max_step: Optional[float] = Field(None, gt=0)

    def learning_rate(self, k: int) -> float:
        """Step size for the (k+1)-th update"""
        if self.schedule == 'exponential':
            return self.alpha * self.decay ** k
        return self.alpha


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    k: int
    config: AdamConfig

    @classmethod
    def initial(cls, dim: int, config: Optional[AdamConfig] = None) -> 'AdamState':
        if dim < 1:
            raise InvalidArgumentError(f"Adam needs a latent of dimension >= 1, got {dim}")
        return cls(m=np.zeros(dim), v=np.zeros(dim), k=0, config=config or AdamConfig())


def adam_step(state: AdamState, gradient) -> Tuple[AdamState, np.ndarray]:
    """
    One bias-corrected Adam update for maximisation.

    Returns (next state, update); the caller applies latent += update.
    """
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != state.m.shape:
        raise InvalidArgumentError(f"Gradient has shape {gradient.shape}, expected {state.m.shape}")
    if not np.all(np.isfinite(gradient)):
        index = tuple(int(i) for i in np.argwhere(~np.isfinite(gradient))[0])
        raise NumericError("Non-finite design gradient passed to Adam", term='gradient', index=index)

    cfg = state.config
    k = state.k + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * gradient
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * gradient * gradient
    m_hat = m / (1.0 - cfg.beta1 ** k)
    v_hat = v / (1.0 - cfg.beta2 ** k)

    update = cfg.learning_rate(state.k) * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if cfg.max_step is not None:
        update = np.clip(update, -cfg.max_step, cfg.max_step)
    return replace(state, m=m, v=v, k=k), update
