# snapshot.py
"""
Ensemble checkpoints as JSON.

Layout, fields in this order:
    t              int
    params         M x d_theta nested list
    param_weights  M list
    states         M x N x d_x nested list
    state_weights  M x N nested list

Floats are written with repr precision so a reload is bit-identical.
"""

import json
from pathlib import Path

from ssm.exceptions import InvalidArgumentError

from .ensemble import NestedEnsemble

SNAPSHOT_FIELDS = ('t', 'params', 'param_weights', 'states', 'state_weights')


def ensemble_to_dict(ens: NestedEnsemble) -> dict:
    return {
        't': ens.t,
        'params': ens.params.tolist(),
        'param_weights': ens.param_weights.tolist(),
        'states': ens.states.tolist(),
        'state_weights': ens.state_weights.tolist(),
    }


def ensemble_from_dict(data: dict) -> NestedEnsemble:
    missing = [name for name in SNAPSHOT_FIELDS if name not in data]
    if missing:
        raise InvalidArgumentError(f"Snapshot is missing fields {missing}")
    return NestedEnsemble(
        params=data['params'],
        param_weights=data['param_weights'],
        states=data['states'],
        state_weights=data['state_weights'],
        t=int(data['t']),
    )


def save_snapshot(ens: NestedEnsemble, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ensemble_to_dict(ens)))
    return path


def load_snapshot(path) -> NestedEnsemble:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InvalidArgumentError(f"Snapshot {path} is not valid JSON: {e}") from e
    return ensemble_from_dict(data)
