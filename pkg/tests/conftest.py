"""Shared fixtures, including the global distribution-hygiene hook.

Every LogDistribution constructed anywhere during the test session is
re-checked for normalization within 1e-9 by an observer hook, so a
regression that bypasses the normal construction path cannot slip by.
"""

import math

import pytest

from pragmadecode.core import NEG_INF, LogDistribution


class HygieneCounter:
    def __init__(self):
        self.count = 0
        self.violations = []

    def __call__(self, dist: LogDistribution) -> None:
        self.count += 1
        total = math.fsum(math.exp(w) for w in dist.logweights if w > NEG_INF)
        if abs(total - 1.0) > 1e-9:
            self.violations.append((dist.support, total))


@pytest.fixture(scope="session", autouse=True)
def distribution_hygiene():
    counter = HygieneCounter()
    LogDistribution.add_hook(counter)
    yield counter
    LogDistribution.remove_hook(counter)
    assert not counter.violations, f"unnormalized distributions observed: {counter.violations[:3]}"
