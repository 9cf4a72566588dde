"""
Probe a model's densities and design gradients against its contract.

Usage:
    python manage.py validate_model --model sir
    python manage.py validate_model --config presets/source-desk.yaml --probes 500
"""

from django.core.management.base import BaseCommand, CommandError

from experiments.config import load_config_file
from ssm.exceptions import BadpodsError
from ssm.rng import RngStream
from ssm.validation import validate_model
from testbeds.registry import MODELS, build_model


class Command(BaseCommand):
    help = 'Check a model for non-finite densities and malformed design gradients'

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--model', choices=sorted(MODELS), help='Model with its default config')
        source.add_argument('--config', help='Experiment YAML whose model block is validated')
        parser.add_argument('--probes', type=int, default=200, help='Number of random probes (default: 200)')
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        try:
            if options['config']:
                model = build_model(load_config_file(options['config']).model)
            else:
                model = build_model(options['model'])
            report = validate_model(model, options['probes'], RngStream(options['seed']).child('validate'))
        except BadpodsError as e:
            raise CommandError(str(e))

        if report.ok:
            self.stdout.write(self.style.SUCCESS(f"{report.model}: {report.probes} probes, no violations"))
            return

        for violation in report.violations[:10]:
            self.stdout.write(f"  probe {violation.probe}: {violation.kind}: {violation.detail}")
        if len(report.violations) > 10:
            self.stdout.write(f"  ... and {len(report.violations) - 10} more")
        raise CommandError(f"{report.model}: {len(report.violations)} violations {report.kinds()}")
