import math

import numpy as np
import pytest
from scipy import integrate

from src.weights import (
    Degenerate,
    Exponential,
    FiniteDiscrete,
    Pareto,
    WeightModelError,
    WeightSpecError,
    format_weight_spec,
    has_power_law_tail,
    moment,
    parse_weight_spec,
    sample,
    validate,
    zero_mass,
)


def test_exponential_moments_are_factorial_over_rate_power():
    model = Exponential(2.0)
    assert [float(moment(model, k)) for k in (1, 2, 3, 4)] == pytest.approx(
        [0.5, 0.5, 0.75, 1.5]
    )


def test_pareto_moment_matches_numerical_integral():
    model = Pareto(3.5, 2.0)

    def density(x):
        return model.alpha * model.xmin**model.alpha * x ** (-model.alpha - 1)

    for k in (1, 2, 3):
        numeric, _err = integrate.quad(lambda x: x**k * density(x), model.xmin, math.inf)
        assert moment(model, k).value == pytest.approx(numeric, rel=1e-7)


def test_pareto_moment_infinite_at_or_above_alpha():
    model = Pareto(2.0, 1.0)
    assert moment(model, 1).finite
    second = moment(model, 2)
    assert not second.finite
    assert float(second) == math.inf


def test_degenerate_zero_is_valid_and_all_mass_at_zero():
    model = Degenerate(0.0)
    validate(model)
    assert moment(model, 3).value == 0.0
    assert zero_mass(model) == 1.0


def test_discrete_moment_and_zero_mass():
    model = FiniteDiscrete(((0.0, 0.25), (2.0, 0.75)))
    assert moment(model, 2).value == pytest.approx(3.0)
    assert zero_mass(model) == 0.25


def test_moment_order_out_of_range_rejected():
    with pytest.raises(WeightModelError) as excinfo:
        moment(Exponential(1.0), 5)
    assert excinfo.value.field == "k"


@pytest.mark.parametrize(
    "model, field",
    [
        (Exponential(0.0), "rate"),
        (Pareto(-1.0, 1.0), "alpha"),
        (Pareto(2.0, 0.0), "xmin"),
        (Degenerate(-0.5), "c"),
        (FiniteDiscrete(((1.0, 0.5), (2.0, 0.4))), "atoms"),
        (FiniteDiscrete(((-1.0, 1.0),)), "atoms[0].value"),
    ],
)
def test_validate_names_the_offending_field(model, field):
    with pytest.raises(WeightModelError) as excinfo:
        validate(model)
    assert excinfo.value.field == field


def test_sample_empirical_mean_within_five_standard_errors(rng):
    count = 200_000
    for model in (Exponential(0.5), Pareto(4.0, 1.0), FiniteDiscrete(((1.0, 0.5), (3.0, 0.5)))):
        draws = sample(model, count, rng)
        mean = moment(model, 1).value
        sd = math.sqrt(moment(model, 2).value - mean**2)
        assert abs(draws.mean() - mean) < 5 * sd / math.sqrt(count)


def test_pareto_samples_respect_xmin(rng):
    draws = sample(Pareto(1.5, 3.0), 10_000, rng)
    assert draws.min() >= 3.0


def test_sample_is_reproducible_from_the_same_seed():
    first = sample(Exponential(1.0), 5, np.random.default_rng(3))
    second = sample(Exponential(1.0), 5, np.random.default_rng(3))
    assert np.array_equal(first, second)


def test_parse_weight_spec_variants():
    assert parse_weight_spec("degenerate:1") == Degenerate(1.0)
    assert parse_weight_spec("exp:2.5") == Exponential(2.5)
    assert parse_weight_spec("pareto:2.5,1") == Pareto(2.5, 1.0)
    assert parse_weight_spec("discrete:0:0.5,2:0.5") == FiniteDiscrete(
        ((0.0, 0.5), (2.0, 0.5))
    )


def test_format_then_parse_returns_the_same_model():
    for model in (Degenerate(1.5), Exponential(0.1), Pareto(2.5, 1.0)):
        assert parse_weight_spec(format_weight_spec(model)) == model


@pytest.mark.parametrize(
    "text, position",
    [
        ("exp", 3),
        ("gamma:1", 0),
        ("pareto:2.5", 10),
        ("exp:abc", 4),
        ("exp:1 ", 5),
    ],
)
def test_parse_weight_spec_reports_position(text, position):
    with pytest.raises(WeightSpecError) as excinfo:
        parse_weight_spec(text)
    assert excinfo.value.position == position


def test_parse_weight_spec_validates_parameters():
    with pytest.raises(WeightModelError):
        parse_weight_spec("exp:0")


def test_only_pareto_has_power_law_tail():
    assert has_power_law_tail(Pareto(2.5, 1.0))
    assert not has_power_law_tail(Exponential(1.0))
    assert not has_power_law_tail(Degenerate(1.0))


@pytest.mark.parametrize(
    "model",
    [
        Degenerate(2.0),
        Degenerate(0.0),
        Exponential(0.5),
        Pareto(3.0, 1.0),
        Pareto(1.5, 1.0),
        FiniteDiscrete(((0.0, 0.3), (1.0, 0.2), (4.0, 0.5))),
    ],
)
def test_first_moment_never_exceeds_root_second_moment(model):
    first, second = moment(model, 1), moment(model, 2)
    if first.finite and second.finite:
        assert first.value <= math.sqrt(second.value) + 1e-12
    else:
        assert not second.finite
