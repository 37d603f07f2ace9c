import pytest

from src.acceptance import (
    CHECKS,
    brute_force_degrees,
    check_determinism,
    check_generator_exactness,
    run_checks,
)
from tests.fakes import instance_from_lists, neighbour_sets


def test_every_check_is_registered():
    assert len(CHECKS) == 12
    assert "power_law_tail" in CHECKS


def test_brute_force_oracle_counts_distinct_neighbours():
    lists = [[0, 1], [1, 2], [0, 1, 2]]
    instance = instance_from_lists(lists, n=4)
    expected = [len(s) for s in neighbour_sets(lists, 4)]
    assert brute_force_degrees(instance).tolist() == expected == [2, 2, 2, 0]


def test_generator_exactness_on_reduced_replicates():
    passed, detail = check_generator_exactness(seed=1, replicates=3000)
    assert passed, detail


def test_determinism_check_passes():
    passed, detail = check_determinism(seed=2, replicates=1)
    assert passed, detail


def test_run_checks_times_each_result():
    results = run_checks(["size_bias_fixed_point", "lecam_bound"])
    assert [r.name for r in results] == ["size_bias_fixed_point", "lecam_bound"]
    assert all(r.passed for r in results)
    assert all(r.runtime_s >= 0 for r in results)


def test_run_checks_rejects_unknown_names():
    with pytest.raises(ValueError):
        run_checks(["generator_speed"])
