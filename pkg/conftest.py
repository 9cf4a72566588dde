"""Pytest wiring for the Django test modules (mirrors config.test_runner)."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
django.setup()

collect_ignore = ['manage.py']


def pytest_collection_modifyitems(config, items):
    # Same policy as BadpodsTestRunner: drop `slow`-tagged tests unless enabled
    from django.conf import settings
    if settings.RUN_SLOW_TESTS:
        return
    keep, dropped = [], []
    for item in items:
        tags = set(getattr(getattr(item, 'cls', None), 'tags', ()))
        tags |= set(getattr(getattr(item, 'function', None), 'tags', ()))
        (dropped if 'slow' in tags else keep).append(item)
    if dropped:
        config.hook.pytest_deselected(items=dropped)
        items[:] = keep
