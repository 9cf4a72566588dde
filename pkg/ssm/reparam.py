# reparam.py
"""
Design reparameterizations.

  simplex-sigmoid  d = 2: one latent through the logistic, second component
                   is the complement. d > 2: softmax over d latents with the
                   first latent pinned to 0 (so d - 1 free latents).
  angle-wrap       values = wrap_pi(latent), in [-pi, pi).
  unconstrained    values = latent.
"""

import numpy as np
from scipy.special import expit, softmax

from .exceptions import InvalidArgumentError
from .types import DesignVector, Reparam


def wrap_pi(angle):
    """Wrap to the principal interval [-pi, pi)"""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    # mod can round up to 2*pi just below -pi
    return np.where(wrapped >= np.pi, -np.pi, wrapped)


def wrap_heading(angle):
    """Source-testbed headings live in (-pi, pi]"""
    return -wrap_pi(-np.asarray(angle, dtype=float))


def latent_dimension(reparam, design_dim: int) -> int:
    """Number of free latents needed for a design of dimension design_dim"""
    reparam = Reparam(reparam)
    if reparam is Reparam.SIMPLEX:
        if design_dim < 2:
            raise InvalidArgumentError("A simplex design needs at least 2 components")
        return design_dim - 1
    return design_dim


def _simplex_values(latent: np.ndarray) -> np.ndarray:
    if latent.shape[0] == 1:
        first = expit(latent[0])
        return np.array([first, 1.0 - first])
    return softmax(np.concatenate(([0.0], latent)))


def transform_design(latent, reparam, design_dim=None) -> DesignVector:
    """Map an unconstrained latent to a DesignVector"""
    reparam = Reparam(reparam)
    latent = np.atleast_1d(np.asarray(latent, dtype=float))
    if latent.ndim != 1:
        raise InvalidArgumentError(f"Latent must be a vector, got shape {latent.shape}")
    if design_dim is not None and latent.shape[0] != latent_dimension(reparam, design_dim):
        raise InvalidArgumentError(
            f"{reparam.value} design of dimension {design_dim} needs "
            f"{latent_dimension(reparam, design_dim)} latents, got {latent.shape[0]}"
        )
    if not np.all(np.isfinite(latent)):
        raise InvalidArgumentError(f"Latent contains non-finite entries: {latent.tolist()}")

    if reparam is Reparam.SIMPLEX:
        values = _simplex_values(latent)
    elif reparam is Reparam.ANGLE:
        values = wrap_pi(latent)
    else:
        values = latent.copy()
    return DesignVector(values=values, reparam=reparam, latent=latent)


def design_jacobian(latent, reparam) -> np.ndarray:
    """
    Jacobian d values / d latent, shape (d_xi, d_latent).
    The optimizer maps a design gradient g to latent space as J.T @ g.
    """
    reparam = Reparam(reparam)
    latent = np.atleast_1d(np.asarray(latent, dtype=float))
    if reparam is Reparam.SIMPLEX:
        if latent.shape[0] == 1:
            s = expit(latent[0])
            slope = s * (1.0 - s)
            return np.array([[slope], [-slope]])
        values = _simplex_values(latent)
        full = np.diag(values) - np.outer(values, values)
        # column 0 belongs to the pinned latent
        return full[:, 1:]
    return np.eye(latent.shape[0])


def latent_gradient(design: DesignVector, value_gradient) -> np.ndarray:
    """Chain rule: gradient with respect to the design values -> latent gradient"""
    value_gradient = np.asarray(value_gradient, dtype=float)
    if value_gradient.shape != design.values.shape:
        raise InvalidArgumentError(
            f"Design gradient has shape {value_gradient.shape}, expected {design.values.shape}"
        )
    return design_jacobian(design.latent, design.reparam).T @ value_gradient


def latent_from_values(values, reparam) -> np.ndarray:
    """Inverse transform (used for fixed/static designs read from disk)"""
    reparam = Reparam(reparam)
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if reparam is Reparam.SIMPLEX:
        clipped = np.clip(values, 1e-12, 1.0)
        if values.shape[0] == 2:
            return np.array([np.log(clipped[0]) - np.log(clipped[1])])
        return np.log(clipped[1:]) - np.log(clipped[0])
    if reparam is Reparam.ANGLE:
        return wrap_pi(values)
    return values.copy()
