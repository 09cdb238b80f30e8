from __future__ import annotations

import numpy as np
import pytest

from regsdml.data import ResidualFold


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo checks, run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_fold(rng: np.random.Generator, n: int = 30, q: int = 2, d: int = 1, index: int = 0) -> ResidualFold:
    """Random residual fold where X is correlated with A and Y with X."""
    RA = rng.standard_normal((n, q))
    RX = RA @ rng.standard_normal((q, d)) + rng.standard_normal((n, d))
    RY = RX @ rng.standard_normal(d) + rng.standard_normal(n)
    return ResidualFold(RA=RA, RX=RX, RY=RY, fold_index=index)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def fold(rng):
    return make_fold(rng)


@pytest.fixture
def folds(rng):
    return [make_fold(rng, n=40, q=2, index=k) for k in range(2)]
