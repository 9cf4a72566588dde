# config.py
"""
Experiment configuration: one YAML document per experiment, validated here.

    name: sir-desk
    model: {kind: sir, ...}          # any field left out takes the model default
    policy: badpods                  # badpods | random | static | fixed
    static_designs: path/to/designs.json   # required for policy: static
    horizon: 50
    M: 50
    N: 50
    batch: 2500                      # outer samples per gradient step (default M*N)
    K: 100
    eval_batch: 2500                 # outer samples for the recorded EIG (default M*N)
    optimizer: {alpha: 0.03, eps: 1.0e-6}
    jitter_scale: 2.0
    resampling: systematic
    seeds: 0-9                       # list, single int, or inclusive range "a-b"
    checkpoints: [10, 20, 30, 40, 50]
"""

import hashlib
import json
from pathlib import Path
from typing import List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from design.adam import AdamConfig
from design.policies import PolicyTag, SearchBudget
from filtering.resampling import ResamplingScheme
from ssm.exceptions import InvalidArgumentError
from testbeds.registry import ModelConfig


def parse_seeds(value) -> List[int]:
    """Accept 7, [1, 2, 5], '3', '0-9' or '1,4,6-8'"""
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        seeds = []
        for part in value.split(','):
            part = part.strip()
            if '-' in part:
                start, end = (int(p) for p in part.split('-', 1))
                if end < start:
                    raise ValueError(f"Seed range {part} is empty")
                seeds.extend(range(start, end + 1))
            elif part:
                seeds.append(int(part))
        return seeds
    return [int(s) for s in value]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    name: str = 'experiment'
    model: ModelConfig
    policy: PolicyTag = PolicyTag.BADPODS
    static_designs: Optional[str] = None
    horizon: int = Field(50, ge=0)
    M: int = Field(100, ge=1)
    N: int = Field(100, ge=1)
    batch: Optional[int] = Field(None, ge=1)
    K: int = Field(100, ge=1)
    restarts: int = Field(1, ge=1)
    restart_iterations: int = Field(20, ge=1)
    eval_batch: Optional[int] = Field(None, ge=1)
    optimizer: AdamConfig = Field(default_factory=AdamConfig)
    jitter_scale: float = Field(0.1, ge=0)
    resampling: ResamplingScheme = ResamplingScheme.SYSTEMATIC
    seeds: List[int] = Field(default_factory=lambda: [0])
    checkpoints: List[int] = Field(default_factory=list)
    output_dir: Optional[str] = None
    bootstrap_resamples: int = Field(2000, ge=2)

    @field_validator('seeds', mode='before')
    @classmethod
    def _expand_seeds(cls, value):
        return parse_seeds(value)

    @field_validator('seeds')
    @classmethod
    def _check_seeds(cls, value):
        if not value:
            raise ValueError('at least one seed is required')
        if any(s < 0 for s in value):
            raise ValueError('seeds must be non-negative')
        if len(set(value)) != len(value):
            raise ValueError('seeds must be distinct')
        return value

    @model_validator(mode='after')
    def _check_budgets(self):
        total = self.M * self.N
        if self.batch is not None and self.batch > total:
            raise ValueError(f'batch {self.batch} exceeds M*N={total}')
        if self.eval_batch is not None and self.eval_batch > total:
            raise ValueError(f'eval_batch {self.eval_batch} exceeds M*N={total}')
        if any(not 1 <= c <= self.horizon for c in self.checkpoints):
            raise ValueError(f'checkpoints must lie in [1, horizon={self.horizon}]')
        if self.policy is PolicyTag.STATIC and self.static_designs is None:
            raise ValueError('policy static needs static_designs')
        return self

    # ------------------------------------------------------------------

    @property
    def outer_batch(self) -> int:
        return self.batch or self.M * self.N

    @property
    def evaluation_batch(self) -> int:
        return self.eval_batch or self.M * self.N

    @property
    def search_budget(self) -> SearchBudget:
        return SearchBudget(
            K=self.K,
            batch=self.outer_batch,
            adam=self.optimizer,
            restarts=self.restarts,
            restart_iterations=self.restart_iterations,
        )

    @property
    def report_checkpoints(self) -> List[int]:
        return self.checkpoints or ([self.horizon] if self.horizon else [])

    def config_hash(self) -> str:
        """
        Fingerprint of everything that defines the evaluation yardstick: the
        model, the ensemble sizes, the evaluation batch, the jitter and the
        resampling scheme. Policy, seeds and search budget are not part of it.
        """
        payload = {
            'model': self.model.model_dump(mode='json'),
            'M': self.M,
            'N': self.N,
            'eval_batch': self.evaluation_batch,
            'jitter_scale': self.jitter_scale,
            'resampling': self.resampling.value,
        }
        encoded = json.dumps(payload, sort_keys=True).encode('utf-8')
        return hashlib.sha256(encoded).hexdigest()[:16]

    def with_overrides(self, **changes) -> 'ExperimentConfig':
        """Re-validated copy with some fields replaced"""
        data = self.model_dump(mode='json')
        data.update({k: v for k, v in changes.items() if v is not None})
        return load_config(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode='json'), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> 'ExperimentConfig':
        return load_config(yaml.safe_load(text))


def load_config(data) -> ExperimentConfig:
    """Validate raw data, turning schema errors into InvalidArgumentError with field paths"""
    if not isinstance(data, dict):
        raise InvalidArgumentError("Experiment config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = '; '.join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise InvalidArgumentError(f"Invalid experiment config: {problems}") from e


def load_config_file(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"Config file {path} does not exist")
    return ExperimentConfig.from_yaml(path.read_text(encoding='utf-8'))
