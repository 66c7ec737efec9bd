import numpy as np
import pytest
from numpy.testing import assert_allclose

from exceptions import ConfigError, DegenerateDataError, DimensionError, DomainError, NoOracleError
from services.model_core import (
    AutologisticModel,
    FiniteFamilyModel,
    build_model,
    check_theta,
    exact_norming,
    fisher_information,
    log_density,
    log_unnorm_density,
    sample_response,
    sample_responses,
    suff_stat,
    toy_closed_form,
)
from util import seeded_stream


def test_toy_norming_closed_form(toy):
    theta = 0.3
    triple = exact_norming(toy, [], [theta])
    assert_allclose(triple.value, 1 + np.exp(theta))
    assert_allclose(triple.grad, [np.exp(theta)])
    assert_allclose(triple.hess, [[np.exp(theta)]])
    sigma = 1 / (1 + np.exp(-theta))
    assert_allclose(triple.log_grad, [sigma])
    assert_allclose(triple.log_hess, [[sigma * (1 - sigma)]])


def test_toy_norming_over_wide_range(toy):
    for theta in np.linspace(-10.0, 10.0, 81):
        assert_allclose(exact_norming(toy, [], [theta]).value, 1 + np.exp(theta), rtol=1e-12)


def test_norming_gradient_matches_finite_differences(lattice):
    x, h = [1.5], 1e-5
    for theta in ([0.0, 0.0], [0.4, -0.3], [-1.2, 0.8]):
        theta = np.asarray(theta)
        triple = exact_norming(lattice, x, theta)
        numeric = np.array([
            (exact_norming(lattice, x, theta + step).value - exact_norming(lattice, x, theta - step).value) / (2 * h)
            for step in np.eye(2) * h
        ])
        assert_allclose(triple.grad, numeric, rtol=1e-7)
        numeric_log = np.array([
            (exact_norming(lattice, x, theta + step).log_value - exact_norming(lattice, x, theta - step).log_value) / (2 * h)
            for step in np.eye(2) * h
        ])
        assert_allclose(triple.log_grad, numeric_log, rtol=1e-7, atol=1e-9)


def test_model_operations_are_pure(lattice):
    y, x, theta = [1, 0, 1, 1], [0.5], [0.3, -0.2]
    first = (suff_stat(lattice, y, x), log_unnorm_density(lattice, y, x, theta), exact_norming(lattice, x, theta))
    second = (suff_stat(lattice, y, x), log_unnorm_density(lattice, y, x, theta), exact_norming(lattice, x, theta))
    assert np.array_equal(first[0], second[0])
    assert first[1] == second[1]
    assert first[2].log_value == second[2].log_value
    assert np.array_equal(first[2].log_grad, second[2].log_grad)
    assert np.array_equal(first[2].log_hess, second[2].log_hess)


def test_toy_density_sums_to_one(toy):
    total = sum(np.exp(log_density(toy, [y], [], [0.7])) for y in (0, 1))
    assert_allclose(total, 1.0)
    assert log_unnorm_density(toy, [1], [], [0.7]) == pytest.approx(0.7)


def test_autologistic_all_ones_statistic(lattice):
    assert lattice.edges.shape == (4, 2)
    assert_allclose(suff_stat(lattice, [1, 1, 1, 1], [1.0]), [4.0, 4.0])
    assert_allclose(suff_stat(lattice, [1, 0, 0, 1], [1.0]), [2.0, 0.0])
    # per-site covariate, row-major
    assert_allclose(suff_stat(lattice, [1, 1, 0, 0], [0.5, 2.0, 0.0, 0.0]), [2.5, 1.0])


def test_autologistic_empty_covariate_uses_default(lattice):
    assert_allclose(lattice.check_covariate([]), [1.0])
    with pytest.raises(DomainError):
        lattice.check_covariate([1.0, 2.0, 3.0])


def test_autologistic_enumeration_at_zero(lattice):
    triple = exact_norming(lattice, [1.0], [0.0, 0.0])
    assert lattice.support.shape == (16, 4)
    assert_allclose(triple.value, 16.0)
    stats = lattice.support_statistics(np.array([1.0]))
    assert_allclose(triple.log_grad, stats.mean(axis=0))
    assert_allclose(triple.log_hess, np.cov(stats.T, bias=True), atol=1e-12)


def test_large_lattice_has_no_oracle():
    model = AutologisticModel(5, 5)
    assert model.support is None
    with pytest.raises(NoOracleError):
        exact_norming(model, [1.0], [0.1, 0.1])


def test_response_domain_checks(toy, lattice):
    with pytest.raises(DomainError):
        toy.check_responses([[2]])
    with pytest.raises(DomainError):
        lattice.check_responses([[1, 0, 1]])
    with pytest.raises(DomainError):
        toy.check_responses([[0.5]])


def test_check_theta(toy, lattice):
    assert_allclose(check_theta(toy, 0.2), [0.2])
    with pytest.raises(DimensionError):
        check_theta(lattice, [0.1])
    with pytest.raises(DomainError):
        check_theta(toy, [np.nan])


def test_finite_model_validation(three_state):
    assert three_state.param_dim == 2
    with pytest.raises(DomainError):
        three_state.check_responses([[7]])
    with pytest.raises(ConfigError):
        FiniteFamilyModel(states=[[0], [0]], statistics=[[1.0], [2.0]])
    with pytest.raises(DimensionError):
        FiniteFamilyModel.from_config({'states': [[0], [1]], 'statistics': [[0.0], [1.0]], 'param_dim': 2})


@pytest.mark.parametrize('config', [
    {'states': None, 'statistics': None},
    {'states': [[0], [1]], 'statistics': None},
    {'states': 3, 'statistics': [[0.0], [1.0]]},
    {'states': [[0], [1, 1]], 'statistics': [[0.0], [1.0]]},
])
def test_finite_model_rejects_missing_or_malformed_states(config):
    with pytest.raises(ConfigError):
        FiniteFamilyModel.from_config(config)
    with pytest.raises(ConfigError):
        build_model('finite', states=config['states'], statistics=config['statistics'])


def test_build_model_kinds():
    assert build_model('toy').param_dim == 1
    assert build_model('autologistic', rows=2, cols=3).response_dim == 6
    with pytest.raises(ConfigError):
        build_model('autologistic')
    with pytest.raises(ConfigError):
        build_model('ising')


def test_sample_responses_frequency(toy, rng):
    draws = sample_responses(toy, np.zeros((20000, 0)), [np.log(3.0)], rng)
    assert draws.shape == (20000, 1)
    assert abs(draws.mean() - 0.75) < 0.015


def test_sample_response_repeats_for_equal_seeds(lattice):
    def sequence(seed):
        rng = seeded_stream(seed)
        return np.array([sample_response(lattice, [1.0], [0.3, 0.2], rng) for _ in range(50)])

    assert np.array_equal(sequence(99), sequence(99))
    assert not np.array_equal(sequence(99), sequence(100))


def test_sample_response_toy_frequency_at_zero(toy):
    rng = seeded_stream(2718)
    draws = [int(sample_response(toy, [], [0.0], rng)[0]) for _ in range(10000)]
    assert 0.47 <= np.mean(draws) <= 0.53


def test_sample_response_in_support(lattice, rng):
    y = sample_response(lattice, [1.0], [0.3, 0.2], rng)
    assert y.shape == (4,)
    assert set(np.unique(y)) <= {0, 1}


def test_fisher_information_toy(toy):
    psi = 1.0
    assert_allclose(fisher_information(toy, [], [psi]), [[np.exp(psi) / (1 + np.exp(psi)) ** 2]])
    # inverse information is the psi-sweep curve
    assert_allclose(1 / fisher_information(toy, [], [psi])[0, 0], np.exp(-psi) * (1 + np.exp(psi)) ** 2)


def test_toy_closed_form():
    assert toy_closed_form(0.75, 0.5, 0.0) == pytest.approx(np.log(3.0))
    assert toy_closed_form(0.5, 0.5, 1.2) == pytest.approx(1.2)
    with pytest.raises(DegenerateDataError):
        toy_closed_form(1.0, 0.5, 0.0)
