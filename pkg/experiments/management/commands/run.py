"""
Run a sequential experiment for every configured seed.

Usage:
    python manage.py run --config presets/sir-desk.yaml
    python manage.py run --config presets/sir-desk.yaml --policy random --seeds 0-4 --jobs 4
    python manage.py run --config presets/source-desk.yaml --out results/source --progress

Writes one <name>_<policy>_seedNNNN.csv/.json pair per seed. A seed that
fails is listed in failures.json and the command exits nonzero; the other
seeds still run.
"""

import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from joblib import Parallel, delayed

from experiments.config import load_config_file
from experiments.harness import run_sequential
from ssm.exceptions import BadpodsError, ExperimentFailure

logger = logging.getLogger('badpods.experiments')


def output_directory(config, out=None) -> Path:
    if out:
        return Path(out)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(settings.OUTPUT_DIR) / config.name


def run_seed(config, seed: int, out: Path, progress: bool = False) -> dict:
    """Run and write one seed; returns a status entry (never raises simulator errors)"""
    try:
        record = run_sequential(config, seed, progress=progress)
    except ExperimentFailure as e:
        if e.record is not None:
            e.record.write(out)
        return {'seed': seed, 'status': 'failed', 'error': str(e), 'completed_steps': e.record.length if e.record else 0}
    except BadpodsError as e:
        return {'seed': seed, 'status': 'failed', 'error': f"{type(e).__name__}: {e}", 'completed_steps': 0}
    csv_path, _ = record.write(out)
    return {'seed': seed, 'status': 'complete', 'csv': str(csv_path), 'teig': record.teig_at(record.length)}


class Command(BaseCommand):
    help = 'Run the sequential design experiment for each seed in a config'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment YAML (see presets/)')
        parser.add_argument('--seeds', help='Override the seeds, e.g. 0-9 or 1,3,5')
        parser.add_argument('--policy', choices=['badpods', 'random', 'static', 'fixed'], help='Override the policy')
        parser.add_argument('--static-designs', help='Design file written by `static` (policy static)')
        parser.add_argument('--jobs', type=int, default=None, help='Seeds run in parallel (default: BADPODS_JOBS)')
        parser.add_argument('--out', help='Output directory (default: output_dir or BADPODS_OUTPUT_DIR/<name>)')
        parser.add_argument('--progress', action='store_true', help='Show a progress bar per seed')

    def handle(self, *args, **options):
        try:
            config = load_config_file(options['config']).with_overrides(
                seeds=options['seeds'], policy=options['policy'], static_designs=options['static_designs'],
            )
        except BadpodsError as e:
            raise CommandError(str(e))

        out = output_directory(config, options['out'])
        out.mkdir(parents=True, exist_ok=True)
        (out / 'failures.json').unlink(missing_ok=True)
        (out / f"{config.name}_{config.policy.value}.yaml").write_text(config.to_yaml(), encoding='utf-8')
        jobs = options['jobs'] or settings.DEFAULT_JOBS

        self.stdout.write(
            f"Running {config.name} ({config.policy.value}) over {len(config.seeds)} seed(s), "
            f"T={config.horizon}, M={config.M}, N={config.N}, K={config.K}, jobs={jobs}"
        )
        results = Parallel(n_jobs=jobs)(
            delayed(run_seed)(config, seed, out, options['progress']) for seed in config.seeds
        )

        failures = [r for r in results if r['status'] != 'complete']
        for result in results:
            if result['status'] == 'complete':
                self.stdout.write(f"  seed {result['seed']}: TEIG {result['teig']:.4f}")
            else:
                self.stdout.write(self.style.WARNING(f"  seed {result['seed']}: {result['error']}"))

        if failures:
            manifest = out / 'failures.json'
            manifest.write_text(json.dumps(failures, indent=2) + '\n', encoding='utf-8')
            logger.error(f"{config.name}: {len(failures)}/{len(results)} seeds failed, see {manifest}")
            raise CommandError(f"{len(failures)} of {len(results)} seeds failed; see {manifest}")

        self.stdout.write(self.style.SUCCESS(f"\nWrote {len(results)} record(s) to {out}"))
