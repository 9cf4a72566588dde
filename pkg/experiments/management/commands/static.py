"""
Optimise a static design sequence offline.

Usage:
    python manage.py static --config presets/sir-desk.yaml
    python manage.py static --config presets/sir-desk.yaml --out results/sir-desk/static.json --seed 3

The file written here is what `run --policy static --static-designs <file>` reads.
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from design.static import static_optimize
from experiments.config import load_config_file
from experiments.harness import save_static_designs
from filtering.ensemble import init_ensemble
from filtering.jitter import JitterKernel
from ssm.exceptions import BadpodsError, BudgetExceededError
from ssm.rng import RngStream
from testbeds.registry import build_model

from .run import output_directory

logger = logging.getLogger('badpods.design')


class Command(BaseCommand):
    help = 'Optimise the full design sequence before any data is seen'

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment YAML (see presets/)')
        parser.add_argument('--seed', type=int, default=None, help='Seed for the optimisation (default: first config seed)')
        parser.add_argument('--out', help='Design file (default: <output dir>/<name>_static_designs.json)')

    def handle(self, *args, **options):
        try:
            config = load_config_file(options['config'])
        except BadpodsError as e:
            raise CommandError(str(e))
        if config.horizon < 1:
            raise CommandError("Static optimisation needs a horizon of at least 1")

        seed = options['seed'] if options['seed'] is not None else config.seeds[0]
        out = Path(options['out']) if options['out'] else output_directory(config) / f"{config.name}_static_designs.json"
        model = build_model(config.model)
        stream = RngStream(seed).child('static')
        prior = init_ensemble(model, config.M, config.N, stream.child('prior'))
        kernel = JitterKernel.for_model(model, config.jitter_scale, config.M)

        self.stdout.write(f"Optimising {config.horizon} designs for {config.name} (K={config.K}, seed={seed})")
        try:
            result = static_optimize(
                model, prior, config.horizon, config.search_budget, stream,
                kernel=kernel, scheme=config.resampling,
            )
        except BudgetExceededError as e:
            raise CommandError(f"{e}. Shorten the horizon or raise BADPODS_STATIC_COST_CAP.")
        except BadpodsError as e:
            logger.error(f"Static optimisation for {config.name} failed: {e}")
            raise CommandError(str(e))

        path = save_static_designs(out, result.designs, config, result.trace)
        if result.truncated_rollouts:
            self.stdout.write(self.style.WARNING(f"{result.truncated_rollouts} rollouts were truncated"))
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(result.designs)} designs to {path}"))
