"""Shared test configuration.

Property tests run derandomized so the suite is reproducible end to end;
statistical tests pin their generator substreams for the same reason.
"""

from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    derandomize=True,
    max_examples=100,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")
