"""Shared fixtures for the test suite."""
import numpy as np
import pytest

from skboot import queueing


@pytest.fixture(scope="session")
def testbed_models():
    return queueing.testbed_models()


@pytest.fixture(scope="session")
def topology():
    return queueing.default_topology()


@pytest.fixture(scope="session")
def loaded_protocol(topology, testbed_models):
    return queueing.SimProtocol(
        initial_counts=queueing.loaded_start(topology, testbed_models)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)
