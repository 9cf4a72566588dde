"""
Aggregate run records into TEIG tables with BCa intervals.

Usage:
    python manage.py report "results/sir-desk/*.csv"
    python manage.py report "results/sir-desk/*.csv" --checkpoints 10,20,50 --out results/sir-desk/report
"""

import glob
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments.aggregate import aggregate
from experiments.records import read_record
from ssm.exceptions import InvalidArgumentError

logger = logging.getLogger('badpods.experiments')


def _checkpoints(value):
    return [int(part) for part in value.split(',') if part.strip()]


class Command(BaseCommand):
    help = 'Summarise run records: mean TEIG, BCa intervals, matched-seed differences'

    def add_arguments(self, parser):
        parser.add_argument('records', nargs='+', help='Record CSV paths or glob patterns')
        parser.add_argument('--checkpoints', type=_checkpoints, default=None,
                            help='Comma-separated timesteps (default: the common horizon)')
        parser.add_argument('--out', help='Output directory (default: <first record dir>/report)')
        parser.add_argument('--resamples', type=int, default=2000, help='Bootstrap resamples B (default: 2000)')
        parser.add_argument('--level', type=float, default=0.95, help='Confidence level (default: 0.95)')

    def handle(self, *args, **options):
        paths = sorted({Path(p) for pattern in options['records'] for p in glob.glob(pattern)})
        paths = [p for p in paths if p.suffix == '.csv']
        if not paths:
            raise CommandError(f"No record CSVs match {options['records']}")

        try:
            records = [read_record(p) for p in paths]
            checkpoints = options['checkpoints'] or [min(r.length for r in records)]
            report = aggregate(records, checkpoints, level=options['level'], B=options['resamples'])
        except InvalidArgumentError as e:
            raise CommandError(f"{e} (files: {', '.join(p.name for p in paths)})")

        out = Path(options['out']) if options['out'] else paths[0].parent / 'report'
        written = report.write(out)

        self.stdout.write(f"{len(records)} record(s), config {report.config_hash}")
        for row in report.teig:
            self.stdout.write(
                f"  {row['policy']:<8} t={row['t']:<4} TEIG {row['mean']:.3f} [{row['lo']:.3f}, {row['hi']:.3f}] n={row['n']}"
            )
        for row in report.delta_teig:
            self.stdout.write(
                f"  {row['a']} - {row['b']} t={row['t']:<4} dTEIG {row['mean']:.3f} [{row['lo']:.3f}, {row['hi']:.3f}]"
            )
        logger.info(f"Report over {len(records)} records written to {out}")
        self.stdout.write(self.style.SUCCESS(f"\nWrote {', '.join(p.name for p in written)} to {out}"))
