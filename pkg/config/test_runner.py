"""
Test runner that keeps the desk-scale experiments out of the default run.
Set BADPODS_SLOW_TESTS=True to include tests tagged `slow`.
"""

from django.conf import settings
from django.test.runner import DiscoverRunner


class BadpodsTestRunner(DiscoverRunner):
    """DiscoverRunner that excludes the `slow` tag unless explicitly enabled"""

    def __init__(self, *args, exclude_tags=None, tags=None, **kwargs):
        exclude_tags = set(exclude_tags or [])
        requested = set(tags or [])
        if not settings.RUN_SLOW_TESTS and 'slow' not in requested:
            exclude_tags.add('slow')
        super().__init__(*args, exclude_tags=exclude_tags, tags=tags, **kwargs)
