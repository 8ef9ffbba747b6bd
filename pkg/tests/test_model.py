import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from drfh.model import (
    DimensionError, allocation_from_shares, check_feasible, demand_from_shares, derive_demand,
    global_dominant_share, make_non_wasteful, normalize_cluster, tasks_under_allocation,
)

positive = st.floats(0.01, 10.0)


def test_normalize_two_servers(two_server):
    cluster, _ = two_server
    np.testing.assert_allclose(cluster.capacities, [[1 / 7, 6 / 7], [6 / 7, 1 / 7]], atol=1e-15)
    np.testing.assert_array_equal(cluster.raw, [[2, 12], [12, 2]])
    assert cluster.resource_names == ("cpu", "mem")


def test_normalize_single_and_identical():
    np.testing.assert_array_equal(normalize_cluster([[4, 8]]).capacities, [[1, 1]])
    np.testing.assert_allclose(normalize_cluster([[1, 1]] * 3).capacities, np.full((3, 2), 1 / 3))


@pytest.mark.parametrize("raw", [
    [[1, 2], [3]],  # ragged
    [[1, -1], [1, 1]],  # negative
    [[0, 0], [1, 1]],  # empty server
    [[1, 0], [1, 0]],  # resource with zero total
    [],
])
def test_normalize_rejects(raw):
    with pytest.raises(ValueError):
        normalize_cluster(raw)


def test_zero_capacity_entry_allowed():
    c = normalize_cluster([[1, 0], [1, 2]])
    assert c.capacities[0, 1] == 0


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=st.floats(0.05, 100)))
def test_normalized_totals_are_one(raw):
    c = normalize_cluster(raw)
    np.testing.assert_allclose(c.capacities.sum(axis=0), 1.0, atol=1e-12)


def test_derive_demand_examples(two_server):
    _, (u1, u2) = two_server
    np.testing.assert_allclose(u1.per_task, [1 / 70, 1 / 14])
    np.testing.assert_allclose(u1.normalized, [1 / 5, 1])
    assert u1.dominant == 1
    np.testing.assert_allclose(u2.per_task, [1 / 14, 1 / 70])
    np.testing.assert_allclose(u2.normalized, [1, 1 / 5])
    assert u2.dominant == 0


def test_dominant_tie_goes_to_lowest_index():
    u = demand_from_shares([0.1, 0.1])
    assert u.dominant == 0
    np.testing.assert_array_equal(u.normalized, [1, 1])


@pytest.mark.parametrize("D", [[0.0, 0.1], [-0.1, 0.1]])
def test_demand_must_be_positive(D):
    with pytest.raises(ValueError):
        demand_from_shares(D)


def test_demand_dimension_mismatch(two_server):
    cluster, _ = two_server
    with pytest.raises(DimensionError):
        derive_demand([1, 1, 1], cluster)
    with pytest.raises(ValueError):
        demand_from_shares([0.1, 0.1], weight=0)


def test_tasks_on_whole_server(two_server):
    cluster, (u1, _) = two_server
    alloc = np.array([cluster.capacities[0], [0, 0]])
    per_server, total = tasks_under_allocation(u1, alloc)
    np.testing.assert_allclose(per_server, [10, 0])
    assert total == pytest.approx(10)
    _, G = global_dominant_share(u1, alloc)
    assert G == pytest.approx(5 / 7)


def test_trivial_allocations(two_server):
    _, (u1, _) = two_server
    zero = np.zeros((2, 2))
    assert tasks_under_allocation(u1, zero)[1] == 0
    assert global_dominant_share(u1, zero)[1] == 0
    two = np.array([2 * u1.per_task, [0, 0]])
    assert tasks_under_allocation(u1, two)[0][0] == pytest.approx(2)
    G_l, _ = global_dominant_share(u1, np.array([0.3 * u1.normalized, [0, 0]]))
    assert G_l[0] == pytest.approx(0.3)


def test_make_non_wasteful_examples():
    u = demand_from_shares([0.1, 0.1])
    g = make_non_wasteful(u, np.array([[0.4, 0.2]]))
    np.testing.assert_allclose(g, [0.2])
    np.testing.assert_allclose(make_non_wasteful(u, np.array([0.5 * u.normalized])), [0.5])


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_trim_preserves_task_counts(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    u = demand_from_shares(rng.uniform(0.01, 0.3, m))
    A = rng.uniform(0, 1, (3, m))
    g = make_non_wasteful(u, A)
    trimmed = g[:, None] * u.normalized[None, :]
    assert np.all(trimmed <= A + 1e-15)
    np.testing.assert_allclose(tasks_under_allocation(u, trimmed)[0], tasks_under_allocation(u, A)[0],
                               rtol=1e-12)
    # idempotent on non-wasteful input
    np.testing.assert_allclose(make_non_wasteful(u, trimmed), g, rtol=1e-12)
    # G = N * D_dominant on non-wasteful allocations
    assert global_dominant_share(u, trimmed)[1] == pytest.approx(
        tasks_under_allocation(u, trimmed)[1] * u.dominant_share_per_task, rel=1e-12)


@given(st.lists(positive, min_size=2, max_size=4), st.floats(0, 1), st.floats(0, 1))
def test_task_count_monotone(D, a, b):
    u = demand_from_shares(np.array(D) / 100)
    lo = np.full((1, len(D)), min(a, b))
    hi = lo + abs(a - b)
    assert tasks_under_allocation(u, lo)[1] <= tasks_under_allocation(u, hi)[1]


def test_allocation_from_shares_feasibility(two_server):
    cluster, users = two_server
    g = np.array([[5 / 7, 0], [0, 5 / 7]])
    A = allocation_from_shares(users, g)
    assert A.shape == (2, 2, 2)
    assert check_feasible(cluster, A) <= 1e-12
    assert check_feasible(cluster, 2 * A) > 0


def test_user_demand_is_immutable():
    u = demand_from_shares([0.1, 0.2])
    with pytest.raises(ValueError):
        u.per_task[0] = 1.0
    assert not math.isfinite(u.task_budget)
