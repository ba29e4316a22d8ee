"""Shared fixtures: one seeded test group per security size, reused session-wide.

Group generation at 256 bits means a safe-prime search, so tests share a
single seeded instance instead of regenerating per test.
"""

import random

import pytest

from fenn.group import group_gen


@pytest.fixture(scope="session")
def params64():
    return group_gen(64, seed=7)


@pytest.fixture(scope="session")
def params256():
    return group_gen(256, seed=7)


@pytest.fixture()
def rng():
    return random.Random(1234)
