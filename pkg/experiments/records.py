# records.py
"""
Per-run records and their files.

A run is written as two files sharing a stem:

  <stem>.csv   one row per timestep, columns in this order:
                 t
                 xi_1 .. xi_d          chosen design values
                 y_1 .. y_k            real observation
                 x_1 .. x_s            ground-truth state
                 eig                   EIG of the chosen design at the evaluation budget
                 teig                  running sum of eig
                 theta_mean_1 ..       posterior parameter mean after the update
                 theta_var_1 ..        posterior parameter variance (diagonal)
                 param_ess             ESS of the parameter weights before resampling
                 param_rmse            |posterior mean - true theta|_2
                 state_rmse            |filtering mean - true state|_2
                 log_evidence          log predictive likelihood of y_t
                 pointing_1 ..         per-sensor pointing error (degrees), models with orientations only
  <stem>.json  header: seed, policy, config hash, budgets, trajectory hash,
               column groups, status and per-step wall times.

Floats are written with 17 significant digits, so reruns are byte-identical
and a reload reproduces every value exactly.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from ssm.exceptions import InvalidArgumentError

FLOAT_FORMAT = '%.17g'


@dataclass(frozen=True)
class StepRecord:
    t: int
    design: np.ndarray
    observation: np.ndarray
    true_state: np.ndarray
    eig: float
    teig: float
    param_mean: np.ndarray
    param_var: np.ndarray
    param_ess: float
    param_rmse: float
    state_rmse: float
    log_evidence: float
    pointing_error: Optional[np.ndarray] = None
    wall_time: float = 0.0


@dataclass
class RunRecord:
    name: str
    model: str
    policy: str
    seed: int
    config_hash: str
    horizon: int
    M: int
    N: int
    eval_batch: int
    K: int
    batch: int
    steps: List[StepRecord] = field(default_factory=list)
    status: str = 'complete'
    failure: Optional[str] = None

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def eig(self) -> np.ndarray:
        return np.array([s.eig for s in self.steps])

    @property
    def teig(self) -> np.ndarray:
        return np.array([s.teig for s in self.steps])

    @property
    def designs(self) -> np.ndarray:
        return np.array([s.design for s in self.steps])

    def teig_at(self, t: int) -> float:
        """TEIG after t steps; 0 at t = 0"""
        if not 0 <= t <= self.length:
            raise InvalidArgumentError(f"Checkpoint t={t} outside [0, {self.length}] for seed {self.seed}")
        return float(self.steps[t - 1].teig) if t else 0.0

    def pointing_errors(self, t: int) -> Optional[np.ndarray]:
        if not 1 <= t <= self.length:
            raise InvalidArgumentError(f"Timestep t={t} outside [1, {self.length}] for seed {self.seed}")
        return self.steps[t - 1].pointing_error

    def trajectory_hash(self) -> str:
        """Fingerprint of the ground-truth state path"""
        states = np.ascontiguousarray([s.true_state for s in self.steps], dtype=float)
        return hashlib.sha256(states.tobytes()).hexdigest()[:16]

    @property
    def stem(self) -> str:
        return f"{self.name}_{self.policy}_seed{self.seed:04d}"

    # ------------------------------------------------------------------
    # Tabular form
    # ------------------------------------------------------------------

    def column_groups(self) -> dict:
        if not self.steps:
            return {}
        first = self.steps[0]
        groups = {
            'xi': len(first.design),
            'y': len(first.observation),
            'x': len(first.true_state),
            'theta_mean': len(first.param_mean),
            'theta_var': len(first.param_var),
        }
        if first.pointing_error is not None:
            groups['pointing'] = len(first.pointing_error)
        return groups

    def columns(self) -> List[str]:
        groups = self.column_groups()
        if not groups:
            return ['t', 'eig', 'teig']

        def named(prefix):
            return [f"{prefix}_{i + 1}" for i in range(groups[prefix])]

        columns = ['t'] + named('xi') + named('y') + named('x') + ['eig', 'teig']
        columns += named('theta_mean') + named('theta_var')
        columns += ['param_ess', 'param_rmse', 'state_rmse', 'log_evidence']
        if 'pointing' in groups:
            columns += named('pointing')
        return columns

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for s in self.steps:
            row = [s.t, *s.design, *s.observation, *s.true_state, s.eig, s.teig, *s.param_mean, *s.param_var,
                   s.param_ess, s.param_rmse, s.state_rmse, s.log_evidence]
            if s.pointing_error is not None:
                row += list(s.pointing_error)
            rows.append(row)
        frame = pd.DataFrame(rows, columns=self.columns())
        return frame.astype({'t': int}) if rows else frame

    def header(self) -> dict:
        return {
            'name': self.name,
            'model': self.model,
            'policy': self.policy,
            'seed': self.seed,
            'config_hash': self.config_hash,
            'horizon': self.horizon,
            'M': self.M,
            'N': self.N,
            'eval_batch': self.eval_batch,
            'K': self.K,
            'batch': self.batch,
            'status': self.status,
            'failure': self.failure,
            'length': self.length,
            'trajectory_hash': self.trajectory_hash(),
            'column_groups': self.column_groups(),
            'wall_times': [s.wall_time for s in self.steps],
        }

    # ------------------------------------------------------------------
    # Files
    # ------------------------------------------------------------------

    def write(self, directory):
        """Write <stem>.csv and <stem>.json; returns both paths"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{self.stem}.csv"
        json_path = directory / f"{self.stem}.json"
        self.to_frame().to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        json_path.write_text(json.dumps(self.header(), indent=2) + '\n', encoding='utf-8')
        return csv_path, json_path


def _group(frame, prefix, size, row):
    return np.array([frame[f"{prefix}_{i + 1}"].iloc[row] for i in range(size)], dtype=float)


def read_record(path) -> RunRecord:
    """Load a record from its CSV (or JSON) path; the sidecar must sit next to it"""
    path = Path(path)
    csv_path, json_path = path.with_suffix('.csv'), path.with_suffix('.json')
    if not csv_path.exists() or not json_path.exists():
        raise InvalidArgumentError(f"Record {path} needs both {csv_path.name} and {json_path.name}")
    header = json.loads(json_path.read_text(encoding='utf-8'))
    groups = header.get('column_groups') or {}
    frame = pd.read_csv(csv_path, float_precision='round_trip')
    wall_times = header.get('wall_times') or [0.0] * len(frame)

    steps = []
    for row in range(len(frame)):
        steps.append(StepRecord(
            t=int(frame['t'].iloc[row]),
            design=_group(frame, 'xi', groups['xi'], row),
            observation=_group(frame, 'y', groups['y'], row),
            true_state=_group(frame, 'x', groups['x'], row),
            eig=float(frame['eig'].iloc[row]),
            teig=float(frame['teig'].iloc[row]),
            param_mean=_group(frame, 'theta_mean', groups['theta_mean'], row),
            param_var=_group(frame, 'theta_var', groups['theta_var'], row),
            param_ess=float(frame['param_ess'].iloc[row]),
            param_rmse=float(frame['param_rmse'].iloc[row]),
            state_rmse=float(frame['state_rmse'].iloc[row]),
            log_evidence=float(frame['log_evidence'].iloc[row]),
            pointing_error=_group(frame, 'pointing', groups['pointing'], row) if 'pointing' in groups else None,
            wall_time=float(wall_times[row]),
        ))

    fields = ('name', 'model', 'policy', 'seed', 'config_hash', 'horizon', 'M', 'N', 'eval_batch', 'K', 'batch')
    record = RunRecord(**{k: header[k] for k in fields}, steps=steps,
                       status=header.get('status', 'complete'), failure=header.get('failure'))
    if header.get('trajectory_hash') and record.trajectory_hash() != header['trajectory_hash']:
        raise InvalidArgumentError(f"Record {csv_path.name} does not match its sidecar trajectory hash")
    return record
