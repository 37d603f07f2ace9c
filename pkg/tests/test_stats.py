import json
import math

import numpy as np
import pytest

from src.limit_laws import PmfVector, poisson_pmf
from src.stats import (
    ComparisonReport,
    HillEstimationError,
    empirical_pmf,
    hill_tail_index,
    rebucket,
    total_variation,
    two_proportion_z_test,
)


def test_empirical_pmf_pools_values_above_r_max():
    pmf = empirical_pmf([0, 1, 1, 2, 7], r_max=2)
    assert pmf.masses.tolist() == [0.2, 0.4, 0.2]
    assert pmf.tail_mass == pytest.approx(0.2)


def test_empirical_pmf_rejects_empty_and_negative():
    with pytest.raises(ValueError):
        empirical_pmf([], r_max=3)
    with pytest.raises(ValueError):
        empirical_pmf([1, -1], r_max=3)


def test_rebucket_moves_excess_into_tail():
    pmf = PmfVector(np.array([0.5, 0.25, 0.25]), 0.0)
    pooled = rebucket(pmf, 1)
    assert pooled.masses.tolist() == [0.5, 0.25]
    assert pooled.tail_mass == pytest.approx(0.25)
    with pytest.raises(ValueError):
        rebucket(pmf, 5)


def test_total_variation_identities():
    p = poisson_pmf(2.0, 30)
    q = PmfVector.point_mass(0, 10)
    assert total_variation(p, p) == 0.0
    assert total_variation(p, q) == pytest.approx(total_variation(q, p))
    assert total_variation(p, q) == pytest.approx(1.0 - math.exp(-2.0))
    assert total_variation(PmfVector.point_mass(0, 3), PmfVector.point_mass(2, 3)) == 1.0


def test_total_variation_counts_tail_as_one_bucket():
    p = PmfVector(np.array([0.5, 0.5]), 0.0)
    q = PmfVector(np.array([0.5, 0.0]), 0.5)
    assert total_variation(p, q) == pytest.approx(0.5)


def test_total_variation_shrinks_with_sample_size():
    reference = poisson_pmf(1.0, 30)
    successes = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        small = total_variation(empirical_pmf(rng.poisson(1.0, 1000), 30), reference)
        large = total_variation(empirical_pmf(rng.poisson(1.0, 1_000_000), 30), reference)
        successes += large < small
    assert successes >= 19


def test_hill_estimate_recovers_pareto_index():
    rng = np.random.default_rng(8)
    samples = 1.0 + rng.pareto(2.5, size=200_000)
    estimate = hill_tail_index(samples, 2000)
    assert estimate == pytest.approx(2.5, abs=0.2)


def test_hill_ignores_zeros_and_needs_enough_samples():
    with pytest.raises(HillEstimationError):
        hill_tail_index(np.arange(100), 5)
    with pytest.raises(HillEstimationError):
        hill_tail_index(np.r_[np.zeros(50), np.arange(1, 11)], 10)


def test_hill_rejects_degenerate_order_statistics():
    with pytest.raises(HillEstimationError):
        hill_tail_index(np.full(100, 3), 20)


def test_two_proportion_z_test_direction():
    z, p_value = two_proportion_z_test(90, 100, 50, 100)
    assert z > 0
    assert p_value < 0.01
    z_rev, p_rev = two_proportion_z_test(50, 100, 90, 100)
    assert z_rev == pytest.approx(-z)
    assert p_rev > 0.99


def test_two_proportion_z_test_identical_rates():
    assert two_proportion_z_test(0, 10, 0, 20) == (0.0, 0.5)
    with pytest.raises(ValueError):
        two_proportion_z_test(1, 0, 1, 2)


def test_comparison_report_json_layout(tmp_path):
    empirical = PmfVector(np.array([0.5, 0.5]), 0.0)
    reference = PmfVector(np.array([0.25, 0.5, 0.25]), 0.0)
    report = ComparisonReport.compare(
        empirical,
        reference,
        sample_size=10,
        seed=4,
        regime="dense",
        runtime_ms=None,
        limit_mean=math.inf,
    )
    assert report.r_max == 1
    assert report.tv_distance == pytest.approx(0.25)
    assert sum(report.contributions) == pytest.approx(report.tv_distance)

    path = tmp_path / "report.json"
    report.write(path)
    payload = json.loads(path.read_text())
    assert payload["tv"] == pytest.approx(0.25)
    assert payload["n_samples"] == 10
    assert payload["seed"] == 4
    assert payload["regime"] == "dense"
    assert payload["runtime_ms"] is None
    assert payload["metadata"] == {"limit_mean": None}
