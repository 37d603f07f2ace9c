import math

import numpy as np
import pytest
from scipy import stats

from src.acceptance import (
    check_compound_evaluator,
    check_dense_closed_form,
    check_lecam_bound,
    check_size_bias_fixed_point,
)
from src.limit_laws import (
    Balanced,
    Dense,
    LimitSampler,
    PmfError,
    PmfVector,
    RegimeError,
    Sparse,
    compound_poisson_pmf,
    format_pmf_csv,
    has_power_law_limit,
    indicator_sum_pmf,
    lecam_bound,
    lecam_gap,
    limit_mean,
    limit_pmf,
    mixed_poisson_pmf,
    poisson_pmf,
    read_pmf_csv,
    sample_limit,
    size_biased_pmf,
    sparse_isolation_bound,
    write_pmf_csv,
)
from src.stats import empirical_pmf, total_variation
from src.weights import Degenerate, Exponential, FiniteDiscrete, Pareto


def test_pmf_vector_rejects_unnormalized_masses():
    with pytest.raises(PmfError):
        PmfVector(np.array([0.5, 0.4]), 0.0)
    with pytest.raises(PmfError):
        PmfVector(np.array([1.2, -0.2]), 0.0)


def test_sparse_limit_is_point_mass_at_zero():
    pmf = limit_pmf(Sparse(), r_max=10)
    assert pmf.masses[0] == 1.0
    assert pmf.tail_mass == 0.0
    assert sample_limit(Sparse(), np.random.default_rng(0)) == 0


def test_size_bias_fixed_point_for_poisson():
    passed, detail = check_size_bias_fixed_point(seed=0)
    assert passed, detail


def test_size_bias_refuses_heavy_truncation():
    with pytest.raises(PmfError):
        size_biased_pmf(poisson_pmf(5.0, 5))


def test_size_bias_with_exact_mean_moves_unresolved_mass_to_tail():
    biased = size_biased_pmf(poisson_pmf(5.0, 5), mean=5.0)
    expected = poisson_pmf(5.0, 4)
    assert np.allclose(biased.masses, expected.masses, atol=1e-14)
    assert biased.tail_mass == pytest.approx(expected.tail_mass)


def test_size_bias_needs_positive_mean():
    with pytest.raises(PmfError):
        size_biased_pmf(PmfVector.point_mass(0, 5))


def test_dense_exponential_mixing_is_geometric():
    passed, detail = check_dense_closed_form(seed=0)
    assert passed, detail


def test_dense_degenerate_mixing_is_poisson():
    pmf = limit_pmf(Dense(Exponential(1.0), Degenerate(1.5)), r_max=40)
    expected = stats.poisson.pmf(np.arange(41), 2.0 * 1.5 * 1.5)
    assert np.allclose(pmf.masses, expected, atol=1e-14)


def test_discrete_mixing_is_a_finite_mixture():
    mixing = FiniteDiscrete(((1.0, 0.25), (3.0, 0.75)))
    pmf = mixed_poisson_pmf(mixing, 2.0, 30)
    expected = 0.25 * stats.poisson.pmf(np.arange(31), 2.0) + 0.75 * stats.poisson.pmf(
        np.arange(31), 6.0
    )
    assert np.allclose(pmf.masses, expected, atol=1e-14)


def test_pareto_mixing_is_monte_carlo_with_stderr(rng):
    pmf = mixed_poisson_pmf(Pareto(3.0, 1.0), 1.0, 30, n_mix=20_000, rng=rng)
    assert pmf.stderr is not None
    assert (pmf.stderr > 0).any()
    assert abs(pmf.mean() - 1.5) < 0.1


def test_monte_carlo_mixing_needs_a_stream():
    with pytest.raises(PmfError):
        mixed_poisson_pmf(Pareto(3.0, 1.0), 1.0, 10)


def test_panjer_recursion_matches_direct_convolution():
    severity = PmfVector(np.array([0.0, 0.5, 0.3, 0.2]), 0.0)
    lam = 1.3
    pmf = compound_poisson_pmf(lam, severity, 30)
    direct = np.zeros(31)
    power = np.zeros(31)
    power[0] = 1.0
    for k in range(40):
        direct += stats.poisson.pmf(k, lam) * power
        power = np.convolve(power, severity.masses)[:31]
    assert np.allclose(pmf.masses, direct, atol=1e-12)


def test_balanced_degenerate_law_zero_mass_closed_form():
    pmf = limit_pmf(Balanced(1.0, Degenerate(1.0), Degenerate(1.0)), r_max=60)
    assert pmf.masses[0] == pytest.approx(math.exp(-(1.0 - math.exp(-1.0))), abs=1e-12)


def test_balanced_sampler_matches_panjer_pmf():
    passed, detail = check_compound_evaluator(seed=5, draws=200_000)
    assert passed, detail


def test_balanced_exponential_mean_matches_analytic(rng):
    limit = Balanced(2.0, Exponential(1.0), Exponential(1.0))
    pmf = limit_pmf(limit, r_max=400)
    assert pmf.tail_mass < 1e-6
    assert pmf.mean() == pytest.approx(limit_mean(limit), rel=1e-4)


def test_dense_sampler_mean_within_five_standard_errors(rng):
    limit = Dense(Exponential(1.0), Exponential(2.0))
    draws = LimitSampler(limit, rng=rng).draw_many(200_000, rng)
    mean = limit_mean(limit)
    assert mean == pytest.approx(2.0 * 0.25)
    assert abs(draws.mean() - mean) < 5 * draws.std() / math.sqrt(draws.size)


def test_balanced_sampler_agrees_with_exact_pmf(rng):
    limit = Balanced(1.0, Exponential(1.0), Exponential(1.0))
    pmf = limit_pmf(limit, r_max=200)
    draws = LimitSampler(limit, 200, rng=rng).draw_many(200_000, rng)
    assert total_variation(empirical_pmf(draws, 200), pmf) < 0.01


def test_zero_weights_give_point_mass():
    pmf = limit_pmf(Balanced(1.0, Degenerate(0.0), Exponential(1.0)), r_max=5)
    assert pmf.masses[0] == 1.0


def test_balanced_requires_finite_second_moment():
    limit = Balanced(1.0, Pareto(1.5, 1.0), Exponential(1.0))
    with pytest.raises(RegimeError) as excinfo:
        limit_pmf(limit)
    assert excinfo.value.field == "p1"


def test_balanced_override_allows_infinite_second_moment(rng):
    limit = Balanced(1.0, Pareto(1.5, 1.0), Degenerate(1.0), allow_infinite_a2=True)
    pmf = limit_pmf(limit, r_max=60, n_mix=20_000, rng=rng)
    assert pmf.masses.size == 61
    assert pmf.tail_mass > 0
    assert limit_mean(limit) == math.inf


def test_invalid_beta_rejected():
    with pytest.raises(RegimeError) as excinfo:
        limit_pmf(Balanced(0.0, Exponential(1.0), Exponential(1.0)))
    assert excinfo.value.field == "beta"


def test_power_law_limit_conditions():
    assert has_power_law_limit(Dense(Exponential(1.0), Pareto(2.5, 1.0)))
    assert not has_power_law_limit(Dense(Pareto(2.5, 1.0), Exponential(1.0)))
    assert has_power_law_limit(Balanced(1.0, Pareto(3.0, 1.0), Exponential(1.0)))
    assert not has_power_law_limit(Balanced(1.0, Pareto(3.0, 1.0), Degenerate(0.0)))
    assert not has_power_law_limit(Sparse())


def test_sparse_isolation_bound():
    bound = sparse_isolation_bound(10**5, 100, Exponential(1.0), Exponential(1.0))
    assert bound == pytest.approx(math.sqrt(1e-3))


def test_lecam_gap_never_exceeds_bound():
    passed, detail = check_lecam_bound(seed=3)
    assert passed, detail


def test_indicator_sum_of_fair_coins_is_binomial():
    pmf = indicator_sum_pmf([0.5] * 4)
    assert np.allclose(pmf.masses, [1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16])
    assert lecam_bound([0.5] * 4) == pytest.approx(1.0)
    assert 0 < lecam_gap([0.5] * 4) <= 1.0


def test_indicator_probabilities_validated():
    with pytest.raises(ValueError):
        lecam_bound([0.2, 1.5])


def test_pmf_csv_round_trip_keeps_tail(tmp_path):
    pmf = poisson_pmf(3.0, 5)
    path = tmp_path / "pmf.csv"
    write_pmf_csv(pmf, path)
    restored = read_pmf_csv(path)
    assert np.array_equal(restored.masses, pmf.masses)
    assert restored.tail_mass == pmf.tail_mass
    text = format_pmf_csv(pmf)
    assert text.startswith("r,mass,stderr\n0,")
    assert text.splitlines()[-1].startswith("tail,")


def test_size_bias_small_worked_example():
    biased = size_biased_pmf(PmfVector(np.array([0.5, 0.25, 0.25]), 0.0))
    assert biased.masses.tolist() == pytest.approx([1 / 3, 2 / 3], abs=1e-15)
    assert biased.tail_mass == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
def test_unit_severity_gives_poisson_counts(lam):
    pmf = compound_poisson_pmf(lam, PmfVector.point_mass(1, 5), 40)
    expected = stats.poisson.pmf(np.arange(41), lam)
    assert np.allclose(pmf.masses, expected, rtol=0, atol=1e-12)


def test_zero_summands_thin_the_count():
    severity = PmfVector(np.array([0.5, 0.5]), 0.0)
    pmf = compound_poisson_pmf(1.0, severity, 30)
    expected = stats.poisson.pmf(np.arange(31), 0.5)
    assert np.allclose(pmf.masses, expected, rtol=0, atol=1e-12)


def test_balanced_mixed_path_keeps_mass_from_many_zero_summands():
    # With a single atom the mixed Y path must agree with Panjer exactly, even
    # though the count of summands is far above r_max.
    mixed = limit_pmf(
        Balanced(1e4, Degenerate(1.0), FiniteDiscrete(((1.0, 1.0),))), r_max=20
    )
    panjer = limit_pmf(Balanced(1e4, Degenerate(1.0), Degenerate(1.0)), r_max=20)
    assert np.allclose(mixed.masses, panjer.masses, rtol=0, atol=1e-10)
    assert mixed.masses[0] == pytest.approx(
        math.exp(-100.0 * (1.0 - math.exp(-0.01))), rel=1e-9
    )
    assert mixed.tail_mass < 1e-12


def test_balanced_large_beta_exponential_mass_stays_in_range():
    limit = Balanced(1e6, Exponential(1.0), Exponential(1.0))
    pmf = limit_pmf(limit)
    assert pmf.tail_mass < 1e-6
    assert pmf.mean() == pytest.approx(limit_mean(limit), rel=1e-6)


def test_balanced_large_beta_sampler_agrees_with_pmf(rng):
    limit = Balanced(1e6, Exponential(1.0), Exponential(1.0))
    pmf = limit_pmf(limit, r_max=200)
    draws = LimitSampler(limit, 200, rng=rng).draw_many(200_000, rng)
    assert total_variation(empirical_pmf(draws, 200), pmf) < 0.015


def test_balanced_discrete_y_matches_atomwise_panjer():
    p2 = FiniteDiscrete(((0.5, 0.4), (2.0, 0.6)))
    mixed = limit_pmf(Balanced(4.0, Exponential(1.0), p2), r_max=60)
    # Given Y = y the law is compound Poisson(2 y) over the same tau.
    b1 = 0.4 * 0.5 + 0.6 * 2.0
    tau = size_biased_pmf(mixed_poisson_pmf(Exponential(1.0), b1 / 2.0, 61))
    expected = 0.4 * compound_poisson_pmf(1.0, tau, 60).masses + 0.6 * (
        compound_poisson_pmf(4.0, tau, 60).masses
    )
    assert np.allclose(mixed.masses, expected, rtol=0, atol=1e-10)


def test_balanced_pareto_y_is_close_to_exact_mixture(rng):
    limit = Balanced(1.0, Exponential(1.0), Pareto(3.0, 1.0))
    pmf = limit_pmf(limit, r_max=100, n_mix=50_000, rng=rng)
    assert pmf.stderr is not None
    draws = LimitSampler(limit, 100, n_mix=50_000, rng=rng).draw_many(200_000, rng)
    assert total_variation(empirical_pmf(draws, 100), pmf) < 0.025


def test_dense_sampler_agrees_with_pmf(rng):
    limit = Dense(Exponential(1.0), Exponential(1.0))
    pmf = limit_pmf(limit, r_max=100)
    assert pmf.masses[:3].tolist() == pytest.approx([1 / 3, 2 / 9, 4 / 27])
    draws = LimitSampler(limit, 100, rng=rng).draw_many(200_000, rng)
    assert total_variation(empirical_pmf(draws, 100), pmf) < 0.01


def test_lecam_bound_covers_two_indicator_example():
    exact = indicator_sum_pmf([0.3, 0.2])
    assert exact.masses.tolist() == pytest.approx([0.56, 0.38, 0.06])
    bound = lecam_bound([0.3, 0.2])
    assert bound == pytest.approx(0.13)
    assert lecam_gap([0.3, 0.2]) <= bound
