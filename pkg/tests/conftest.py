import numpy as np
import pytest

from drfh.model import derive_demand, normalize_cluster


def two_server_instance():
    """Two complementary servers, one CPU-heavy and one memory-heavy user."""
    cluster = normalize_cluster([[2.0, 12.0], [12.0, 2.0]])
    users = [derive_demand([0.2, 1.0], cluster, name="1"), derive_demand([1.0, 0.2], cluster, name="2")]
    return cluster, users


@pytest.fixture
def two_server():
    return two_server_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
