# aggregate.py
"""
Multi-seed summaries of completed runs: mean TEIG with BCa intervals per
policy and checkpoint, matched-seed TEIG differences between policies,
pointing-error quartiles and median designs.
"""

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List

import numpy as np
import pandas as pd

from ssm.exceptions import InvalidArgumentError
from ssm.rng import RngStream

from .metrics import bootstrap_bca_ci, delta_teig
from .records import FLOAT_FORMAT, RunRecord

logger = logging.getLogger('badpods.experiments')

POLICY_ORDER = ('badpods', 'static', 'fixed', 'random')


def _policy_key(policy: str):
    return (POLICY_ORDER.index(policy) if policy in POLICY_ORDER else len(POLICY_ORDER), policy)


@dataclass
class AggregateReport:
    config_hash: str
    checkpoints: List[int]
    policies: List[str]
    seeds: Dict[str, List[int]]
    level: float
    B: int
    teig: List[dict] = field(default_factory=list)
    delta_teig: List[dict] = field(default_factory=list)
    pointing: List[dict] = field(default_factory=list)
    design_medians: List[dict] = field(default_factory=list)

    def teig_row(self, policy: str, t: int) -> dict:
        for row in self.teig:
            if row['policy'] == policy and row['t'] == t:
                return row
        raise InvalidArgumentError(f"No TEIG row for policy {policy} at t={t}")

    def to_dict(self) -> dict:
        return {
            'config_hash': self.config_hash,
            'checkpoints': self.checkpoints,
            'policies': self.policies,
            'seeds': self.seeds,
            'level': self.level,
            'B': self.B,
            'teig': self.teig,
            'delta_teig': self.delta_teig,
            'pointing': self.pointing,
            'design_medians': self.design_medians,
        }

    def write(self, directory) -> List[Path]:
        """report.json plus one flat CSV per table"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = [directory / 'report.json']
        written[0].write_text(json.dumps(self.to_dict(), indent=2) + '\n', encoding='utf-8')
        tables = {
            'teig.csv': self.teig,
            'delta_teig.csv': [{k: v for k, v in row.items() if k != 'per_seed'} for row in self.delta_teig],
            'pointing.csv': self.pointing,
            'design_medians.csv': self.design_medians,
        }
        for filename, rows in tables.items():
            if rows:
                path = directory / filename
                pd.DataFrame(rows).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
                written.append(path)
        return written


def _interval(samples, level, B, stream):
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    if samples.size < 2:
        return mean, mean, mean
    lo, hi = bootstrap_bca_ci(samples, level, B, stream)
    return mean, lo, hi


def _check_compatible(records: List[RunRecord]):
    hashes = defaultdict(list)
    for record in records:
        hashes[record.config_hash].append(record.stem)
    if len(hashes) > 1:
        detail = '; '.join(f"{h}: {', '.join(sorted(stems))}" for h, stems in hashes.items())
        raise InvalidArgumentError(f"Records come from incompatible configs ({detail})")


def aggregate(records: Iterable[RunRecord], checkpoints: List[int], level: float = 0.95,
              B: int = 2000, seed: int = 0) -> AggregateReport:
    records = list(records)
    if not records:
        raise InvalidArgumentError("No records to aggregate")
    failed = [r.stem for r in records if r.status != 'complete']
    if failed:
        logger.warning(f"Skipping {len(failed)} incomplete records: {', '.join(failed)}")
    records = [r for r in records if r.status == 'complete']
    if not records:
        raise InvalidArgumentError("Every record is incomplete")
    _check_compatible(records)

    by_policy: Dict[str, Dict[int, RunRecord]] = defaultdict(dict)
    for record in records:
        if record.seed in by_policy[record.policy]:
            raise InvalidArgumentError(f"Duplicate record for policy {record.policy}, seed {record.seed}")
        by_policy[record.policy][record.seed] = record
    policies = sorted(by_policy, key=_policy_key)

    checkpoints = sorted(set(int(t) for t in checkpoints))
    if not checkpoints:
        raise InvalidArgumentError("At least one checkpoint is required")
    shortest = min(r.length for r in records)
    beyond = [t for t in checkpoints if not 1 <= t <= shortest]
    if beyond:
        raise InvalidArgumentError(f"Checkpoints {beyond} lie beyond the horizon {shortest}")

    stream = RngStream(seed).child('bootstrap')
    report = AggregateReport(
        config_hash=records[0].config_hash,
        checkpoints=checkpoints,
        policies=policies,
        seeds={p: sorted(by_policy[p]) for p in policies},
        level=level,
        B=B,
    )

    for policy in policies:
        runs = [by_policy[policy][s] for s in sorted(by_policy[policy])]
        for t in checkpoints:
            mean, lo, hi = _interval([r.teig_at(t) for r in runs], level, B, stream.child('teig', policy, t))
            report.teig.append({'policy': policy, 't': t, 'n': len(runs), 'mean': mean, 'lo': lo, 'hi': hi})

            designs = np.array([r.steps[t - 1].design for r in runs])
            medians = np.median(designs, axis=0)
            report.design_medians.append(
                {'policy': policy, 't': t, **{f"xi_{i + 1}": float(v) for i, v in enumerate(medians)}}
            )

            errors = [r.pointing_errors(t) for r in runs]
            if all(e is not None for e in errors):
                pooled = np.concatenate(errors)
                q1, q2, q3 = np.percentile(pooled, [25, 50, 75])
                report.pointing.append(
                    {'policy': policy, 't': t, 'n': int(pooled.size), 'q1': float(q1), 'median': float(q2), 'q3': float(q3)}
                )

    for a, b in combinations(policies, 2):
        matched = sorted(set(by_policy[a]) & set(by_policy[b]))
        if not matched:
            continue
        for s in matched:
            if by_policy[a][s].trajectory_hash() != by_policy[b][s].trajectory_hash():
                raise InvalidArgumentError(
                    f"Seed {s} has different ground-truth trajectories under {a} and {b}"
                )
        for t in checkpoints:
            deltas = [delta_teig(by_policy[a][s], by_policy[b][s], t) for s in matched]
            mean, lo, hi = _interval(deltas, level, B, stream.child('delta', a, b, t))
            report.delta_teig.append({
                'a': a, 'b': b, 't': t, 'n': len(matched), 'mean': mean, 'lo': lo, 'hi': hi,
                'per_seed': dict(zip(matched, deltas)),
            })

    logger.info(f"Aggregated {len(records)} records over {len(policies)} policies at t={checkpoints}")
    return report
