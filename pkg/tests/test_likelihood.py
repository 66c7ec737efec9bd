import numpy as np
import pytest
from numpy.testing import assert_allclose

from exceptions import DimensionError
from services.importance_service import Instrumental, draw_instrumental, draw_joint_instrumental
from services.likelihood_service import (
    LikelihoodCalculator,
    cappe_log_weights,
    cappe_loglik,
    exact_loglik,
    mc_loglik,
    observed_statistics,
)
from services.models import Dataset, JointImportanceSample
from tests.conftest import toy_dataset
from util import seeded_stream


def _finite_difference(fn, theta, h=1e-5):
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = h
        grad[j] = (fn(theta + step) - fn(theta - step)) / (2 * h)
    return grad


def test_exact_toy_loglik(toy):
    data = toy_dataset(30, 40)
    theta = 0.4
    sigma = 1 / (1 + np.exp(-theta))
    evaluation = exact_loglik(data, toy, [theta])
    assert_allclose(evaluation.value, 30 * theta - 40 * np.log1p(np.exp(theta)))
    assert_allclose(evaluation.score, [30 - 40 * sigma])
    assert_allclose(evaluation.hess, [[-40 * sigma * (1 - sigma)]])
    assert evaluation.n == 40


def test_scaled_objective(toy):
    evaluation = exact_loglik(toy_dataset(30, 40), toy, [0.0]).scaled()
    assert evaluation.n == 1
    assert_allclose(evaluation.score, [30 / 40 - 0.5])
    assert_allclose(evaluation.hess, [[-0.25]])


def test_exact_score_and_hessian_match_finite_differences(lattice, lattice_data):
    theta = np.array([0.25, 0.15])
    evaluation = exact_loglik(lattice_data, lattice, theta)
    value = lambda t: exact_loglik(lattice_data, lattice, t).value
    score = lambda t: exact_loglik(lattice_data, lattice, t).score
    assert_allclose(evaluation.score, _finite_difference(value, theta), rtol=1e-5, atol=1e-4)
    numeric_hess = np.array([_finite_difference(lambda t: score(t)[j], theta) for j in range(2)])
    assert_allclose(evaluation.hess, numeric_hess, rtol=1e-5, atol=1e-4)
    assert_allclose(evaluation.hess, evaluation.hess.T)


def test_mc_score_matches_finite_differences(lattice, lattice_data):
    sample = draw_instrumental(Instrumental.uniform(), lattice, 3000, seeded_stream(8))
    theta = np.array([0.1, 0.3])
    evaluation = mc_loglik(lattice_data, sample, lattice, theta)
    value = lambda t: mc_loglik(lattice_data, sample, lattice, t).value
    assert_allclose(evaluation.score, _finite_difference(value, theta), rtol=1e-5, atol=1e-4)
    assert np.all(np.linalg.eigvalsh(-evaluation.hess) > 0)


def test_mc_loglik_close_to_exact_for_large_m(lattice, lattice_data):
    sample = draw_instrumental(Instrumental.model_at([0.3, 0.2], [1.0]), lattice, 100000, seeded_stream(5))
    theta = [0.3, 0.2]
    mc = mc_loglik(lattice_data, sample, lattice, theta).scaled()
    exact = exact_loglik(lattice_data, lattice, theta).scaled()
    assert abs(mc.value - exact.value) < 0.02


def test_score_stays_positive_far_out_on_degenerate_data(toy):
    data = toy_dataset(20, 20)
    score = exact_loglik(data, toy, [40.0]).scaled().score[0]
    assert score > 0
    assert_allclose(score, np.exp(-40.0) / (1 + np.exp(-40.0)), rtol=1e-6)


def test_observed_statistics_group_by_covariate(lattice):
    data = Dataset(responses=[[1, 1, 0, 0], [1, 1, 1, 1]], covariates=[[2.0], [0.5]])
    assert_allclose(observed_statistics(data, lattice), [[4.0, 1.0], [2.0, 4.0]])


def test_cappe_matches_mc_loglik_for_one_observation(toy, toy_sample):
    data = toy_dataset(1, 1)
    joint = JointImportanceSample.from_shared(toy_sample)
    for theta in (-0.7, 0.0, 1.3):
        assert_allclose(cappe_loglik(data, joint, toy, [theta]),
                        mc_loglik(data, toy_sample, toy, [theta]).value, atol=1e-10)


def test_cappe_log_weights_are_sums_over_observations(toy):
    data = toy_dataset(2, 3)
    joint = draw_joint_instrumental(Instrumental.uniform(), toy, 3, 50, seeded_stream(10))
    theta = 0.6
    expected = theta * joint.draws[:, :, 0].sum(axis=1) + 3 * np.log(2.0)
    assert_allclose(cappe_log_weights(data, joint, toy, [theta]), expected)


def test_cappe_rejects_mismatched_joint_sample(toy):
    joint = draw_joint_instrumental(Instrumental.uniform(), toy, 2, 10, seeded_stream(1))
    with pytest.raises(DimensionError):
        cappe_loglik(toy_dataset(1, 3), joint, toy, [0.0])


def test_mc_loglik_is_concave(lattice, lattice_data):
    rng = seeded_stream(77)
    for trial in range(100):
        sample = draw_instrumental(Instrumental.uniform(), lattice, 200, seeded_stream(1000 + trial))
        theta = rng.normal(scale=1.5, size=2)
        hess = mc_loglik(lattice_data, sample, lattice, theta).hess
        assert np.max(np.linalg.eigvalsh(hess)) <= 1e-10 * max(1.0, np.abs(hess).max())


def test_calculator_matches_entry_points(lattice, lattice_data):
    calculator = LikelihoodCalculator(lattice)
    sample = draw_instrumental(Instrumental.uniform(), lattice, 400, seeded_stream(21))
    theta = [0.2, -0.1]
    assert calculator.mc_loglik(lattice_data, sample, theta).value == mc_loglik(lattice_data, sample, lattice, theta).value
    assert calculator.exact_loglik(lattice_data, theta).value == exact_loglik(lattice_data, lattice, theta).value


@pytest.mark.parametrize('model_name', ['toy', 'lattice'])
def test_mc_loglik_error_shrinks_at_root_m(model_name, request):
    model = request.getfixturevalue(model_name)
    if model_name == 'toy':
        data, theta = toy_dataset(30, 40), [0.5]
    else:
        data, theta = request.getfixturevalue('lattice_data'), [0.3, 0.2]
    exact = exact_loglik(data, model, theta).value
    scaled = []
    for m in (100, 1000, 10000):
        errors = [abs(mc_loglik(data, draw_instrumental(Instrumental.uniform(), model, m, seeded_stream(m + r)),
                                model, theta).value - exact)
                  for r in range(200)]
        scaled.append(np.median(errors) * np.sqrt(m))
    assert max(scaled) / min(scaled) <= 1.5


def test_cappe_at_zero_with_uniform_h_is_exact(toy, lattice, lattice_data):
    toy_data = toy_dataset(3, 7)
    joint = draw_joint_instrumental(Instrumental.uniform(), toy, toy_data.n, 20, seeded_stream(3))
    assert_allclose(cappe_loglik(toy_data, joint, toy, [0.0]), exact_loglik(toy_data, toy, [0.0]).value, rtol=1e-12)
    assert_allclose(cappe_loglik(toy_data, joint, toy, [0.0]), -7 * np.log(2.0), rtol=1e-12)

    data = Dataset(responses=lattice_data.responses[:5], covariates=lattice_data.covariates[:5])
    joint = draw_joint_instrumental(Instrumental.uniform(), lattice, data.n, 20, seeded_stream(4))
    assert_allclose(cappe_loglik(data, joint, lattice, [0.0, 0.0]), exact_loglik(data, lattice, [0.0, 0.0]).value,
                    rtol=1e-12)
