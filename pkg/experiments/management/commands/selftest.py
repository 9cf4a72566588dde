"""
Run the oracle and invariant test suites.

Usage:
    python manage.py selftest
    python manage.py selftest --only oracle
"""

from django.core.management import call_command
from django.core.management.base import BaseCommand

SUITES = ('oracle', 'invariant')


class Command(BaseCommand):
    help = 'Run the tests tagged oracle and invariant'

    def add_arguments(self, parser):
        parser.add_argument('--only', choices=SUITES, help='Run a single suite')
        parser.add_argument('--failfast', action='store_true')

    def handle(self, *args, **options):
        tags = [options['only']] if options['only'] else list(SUITES)
        self.stdout.write(f"Running suites: {', '.join(tags)}")
        # exits nonzero through SystemExit when a test fails
        call_command('test', tags=tags, failfast=options['failfast'], verbosity=options['verbosity'])
        self.stdout.write(self.style.SUCCESS('Self-test passed'))
