import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fk_saddle import FlowParams, find_gap_pair, make_potential


@pytest.fixture(scope="session")
def classical():
    return make_potential("classical-fk")


@pytest.fixture(scope="session")
def pinned():
    return make_potential("pinned-fk")


@pytest.fixture(scope="session")
def twowell():
    return make_potential("two-well-fk")


@pytest.fixture(scope="session")
def params():
    return FlowParams()


@pytest.fixture(scope="session")
def gap(classical, params):
    g = find_gap_pair(classical, (1, 1), seed=3, params=params)
    assert g is not None
    return g


@pytest.fixture(scope="session")
def pinned_gap(pinned, params):
    g = find_gap_pair(pinned, (1, 1), seed=3, params=params)
    assert g is not None
    return g
