import csv

import numpy as np
import pytest

from src.acceptance import check_projection_oracle
from src.bipartite import GenerationParams, generate_instance
from src.projector import (
    MembershipOverflowError,
    coincidence_bound,
    coincidence_rate,
    degrees,
    degrees_of_subset,
    empirical_moments,
    l_statistic,
    l_statistics,
    neighbours,
    pair_count,
    write_degree_csv,
)
from src.weights import Exponential
from tests.fakes import instance_from_lists, neighbour_sets

# Vertices 0 and 1 share two attributes; vertex 4 has none.
SHARED = [[0, 1, 2], [0, 1], [2, 3]]


def test_degrees_count_shared_neighbours_once():
    instance = instance_from_lists(SHARED, n=5)
    expected = [len(s) for s in neighbour_sets(SHARED, 5)]
    assert degrees(instance).degrees.tolist() == expected == [2, 2, 3, 1, 0]


def test_l_statistic_counts_with_multiplicity():
    instance = instance_from_lists(SHARED, n=5)
    assert l_statistic(instance, 0) == 3
    assert l_statistics(instance).tolist() == [3, 3, 3, 1, 0]


def test_degree_never_exceeds_l():
    params = GenerationParams(n=300, m=300, p1=Exponential(1.0), p2=Exponential(1.0))
    instance = generate_instance(params, np.random.default_rng(4))
    assert (degrees(instance).degrees <= l_statistics(instance)).all()


def test_degrees_of_subset_agrees_with_full_projection(rng):
    params = GenerationParams(n=200, m=150, p1=Exponential(1.0), p2=Exponential(1.0))
    instance = generate_instance(params, rng)
    full = degrees(instance).degrees
    subset = [0, 5, 199]
    assert degrees_of_subset(instance, subset).tolist() == full[subset].tolist()


def test_projection_matches_brute_force_on_random_small_instances():
    passed, detail = check_projection_oracle(seed=11)
    assert passed, detail


def test_neighbourhoods_are_symmetric_and_match_degrees(rng):
    params = GenerationParams(n=40, m=30, p1=Exponential(0.5), p2=Exponential(0.5))
    instance = generate_instance(params, rng)
    found = [set(neighbours(instance, j).tolist()) for j in range(instance.n)]
    assert [len(s) for s in found] == degrees(instance).degrees.tolist()
    for j in range(instance.n):
        assert j not in found[j]
        for k in found[j]:
            assert j in found[k]


def test_neighbours_follow_shared_attributes():
    instance = instance_from_lists(SHARED, n=5)
    assert [neighbours(instance, j).tolist() for j in range(5)] == [
        [1, 2],
        [0, 2],
        [0, 1, 3],
        [2],
        [],
    ]


def test_degrees_ignore_attribute_order(rng):
    params = GenerationParams(n=120, m=90, p1=Exponential(1.0), p2=Exponential(1.0))
    instance = generate_instance(params, rng)
    lists = [instance.attribute(i).tolist() for i in range(instance.m)]
    order = rng.permutation(instance.m)
    shuffled = instance_from_lists(
        [lists[i] for i in order],
        n=instance.n,
        x_weights=instance.x_weights[order],
        y_weights=instance.y_weights,
    )
    assert np.array_equal(degrees(shuffled).degrees, degrees(instance).degrees)
    assert np.array_equal(l_statistics(shuffled), l_statistics(instance))


def test_pair_cap_raises_with_counts():
    instance = instance_from_lists([[0, 1, 2, 3]], n=4)
    assert pair_count(instance) == 16
    with pytest.raises(MembershipOverflowError) as excinfo:
        degrees(instance, pair_cap=10)
    assert excinfo.value.pair_count == 16
    assert excinfo.value.cap == 10


def test_vertex_index_out_of_range():
    instance = instance_from_lists(SHARED, n=5)
    with pytest.raises(IndexError):
        l_statistic(instance, 5)
    with pytest.raises(IndexError):
        degrees_of_subset(instance, [-1])


def test_empirical_moments_of_weights():
    instance = instance_from_lists(
        [[0]], n=2, x_weights=[2.0], y_weights=[1.0, 3.0]
    )
    moments = empirical_moments(instance)
    assert moments == {"a1_hat": 2.0, "a2_hat": 4.0, "b1_hat": 2.0, "b2_hat": 5.0}


def test_coincidence_bound_formula():
    instance = instance_from_lists(
        [[0], [1]], n=2, x_weights=[1.0, 2.0], y_weights=[3.0, 1.0]
    )
    # Q_X = (1 * 4) / m^2 = 1; b2_hat excludes vertex 0: 1 / 2.
    assert coincidence_bound(instance, 0) == pytest.approx(0.5 * 9.0 * 1.0 / 2)


def test_coincidence_rate_is_zero_when_attributes_cannot_overlap(rng):
    params = GenerationParams(n=50, m=1, p1=Exponential(1.0), p2=Exponential(1.0))
    assert coincidence_rate(params, 30, rng) == 0.0


def test_write_degree_csv_long_and_histogram(tmp_path):
    instance = instance_from_lists(SHARED, n=5)
    sample = degrees(instance, replicate_id=3)

    long_path = tmp_path / "degrees.csv"
    write_degree_csv(long_path, [sample])
    with open(long_path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["replicate_id", "vertex_id", "degree"]
    assert rows[1] == ["3", "0", "2"]
    assert len(rows) == 6

    hist_path = tmp_path / "histogram.csv"
    write_degree_csv(hist_path, [sample], form="histogram")
    assert hist_path.read_text().splitlines() == [
        "degree,count",
        "0,1",
        "1,1",
        "2,2",
        "3,1",
    ]
