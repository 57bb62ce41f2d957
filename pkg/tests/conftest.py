"""Shared test configuration.

Wall-clock deadlines make property tests flaky on loaded machines, so
they are disabled globally; the acceptance suite asserts its own
explicit runtime bounds where timing matters.
"""

from hypothesis import settings

settings.register_profile("morp", deadline=None)
settings.load_profile("morp")
