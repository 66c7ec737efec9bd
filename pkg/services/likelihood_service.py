"""Exact log-likelihood, its Monte Carlo approximation and the Cappe-scheme rival."""

import logging
from typing import Any, Callable

import numpy as np
from scipy.special import logsumexp

from exceptions import DimensionError, NumericalUnderflowError
from services.importance_service import ImportanceSampler
from services.model_core import ExponentialFamilyModel, check_theta, exact_norming
from services.models import Dataset, ImportanceSample, JointImportanceSample, NormingTriple, ObjectiveEval
from util import group_covariates, symmetrize

logger = logging.getLogger(__name__)


class LikelihoodCalculator:
    """Log-likelihood objectives of one model over a dataset."""

    def __init__(self, model: ExponentialFamilyModel):
        self.model = model
        self.sampler = ImportanceSampler(model)

    def observed_statistics(self, data: Dataset) -> np.ndarray:
        """S(Y_i, X_i) stacked as (n, p)."""
        model = self.model
        responses = model.check_responses(data.responses)
        unique, inverse, _ = group_covariates(data.covariates)
        stats = np.empty((data.n, model.param_dim))
        for g, x in enumerate(unique):
            rows = inverse == g
            stats[rows] = model.statistics(responses[rows], model.check_covariate(x))
        return stats

    def mc_loglik(self, data: Dataset, sample: ImportanceSample, theta: Any) -> ObjectiveEval:
        """
        l_n^m(theta) = sum_i log f(Y_i|X_i, theta) - sum_i log C_m(X_i, theta).

        Args:
            data: observed dataset
            sample: draws from h shared by every observation
            theta: parameter vector

        Returns:
            ObjectiveEval with value, score and Hessian (unscaled)
        """
        theta = check_theta(self.model, theta)
        return self._assemble(data, theta, lambda x: self.sampler.norming(sample, x, theta))

    def exact_loglik(self, data: Dataset, theta: Any) -> ObjectiveEval:
        """
        l_n(theta) through the enumeration oracle.

        Args:
            data: observed dataset
            theta: parameter vector

        Returns:
            ObjectiveEval with value, score and Hessian (unscaled)

        Raises:
            NoOracleError: the model support cannot be enumerated
        """
        theta = check_theta(self.model, theta)
        return self._assemble(data, theta, lambda x: exact_norming(self.model, x, theta))

    def cappe_log_weights(self, data: Dataset, joint_samples: JointImportanceSample, theta: Any) -> np.ndarray:
        """Per-k log of prod_i f(Y_i^k|X_i, theta) / h_i(Y_i^k), shape (m,)."""
        model = self.model
        theta = check_theta(model, theta)
        if joint_samples.n != data.n:
            raise DimensionError(f"Joint sample covers {joint_samples.n} observations, dataset has {data.n}")
        log_weights = -joint_samples.log_h.sum(axis=1)
        for i, x in enumerate(data.covariates):
            stats = model.statistics(joint_samples.draws[:, i, :], model.check_covariate(x))
            log_weights = log_weights + stats @ theta
        return log_weights

    def cappe_loglik(self, data: Dataset, joint_samples: JointImportanceSample, theta: Any) -> float:
        """
        sum_i log f(Y_i|X_i, theta) - log (1/m) sum_k prod_i f(Y_i^k|X_i, theta) / h_i(Y_i^k).

        Comparison baseline only; the product is a sum of logs reduced with logsumexp.

        Args:
            data: observed dataset
            joint_samples: one draw per observation for each k
            theta: parameter vector

        Returns:
            Objective value

        Raises:
            DimensionError: joint sample and dataset sizes differ
            NumericalUnderflowError: every log weight is infinite
        """
        theta = check_theta(self.model, theta)
        log_weights = self.cappe_log_weights(data, joint_samples, theta)
        if not np.isfinite(np.max(log_weights)):
            raise NumericalUnderflowError("Cappe log weights are not finite")
        log_mean = logsumexp(log_weights) - np.log(joint_samples.m)
        return float(np.sum(self.observed_statistics(data) @ theta) - log_mean)

    def _assemble(self, data: Dataset, theta: np.ndarray,
                  norming: Callable[[np.ndarray], NormingTriple]) -> ObjectiveEval:
        """
        Sum theta^T S(Y_i, X_i) - log C(X_i, theta) with its calculus.

        C is evaluated once per distinct covariate row and weighted by the row
        count; groups are reduced in first-seen order.
        """
        p = self.model.param_dim
        stats = self.observed_statistics(data)
        unique, inverse, counts = group_covariates(data.covariates)

        value = float(np.sum(stats @ theta))
        score = np.zeros(p)
        hess = np.zeros((p, p))
        for g, (x, count) in enumerate(zip(unique, counts)):
            triple = norming(x)
            value -= count * triple.log_value
            score = score + triple.centred_sum(stats[inverse == g].sum(axis=0), int(count))
            hess = hess - count * triple.log_hess
        return ObjectiveEval(value=value, score=score, hess=symmetrize(hess), n=data.n)


def observed_statistics(data: Dataset, model: ExponentialFamilyModel) -> np.ndarray:
    return LikelihoodCalculator(model).observed_statistics(data)


def mc_loglik(data: Dataset, sample: ImportanceSample, model: ExponentialFamilyModel, theta: Any) -> ObjectiveEval:
    return LikelihoodCalculator(model).mc_loglik(data, sample, theta)


def exact_loglik(data: Dataset, model: ExponentialFamilyModel, theta: Any) -> ObjectiveEval:
    return LikelihoodCalculator(model).exact_loglik(data, theta)


def cappe_log_weights(data: Dataset, joint_samples: JointImportanceSample, model: ExponentialFamilyModel,
                      theta: Any) -> np.ndarray:
    return LikelihoodCalculator(model).cappe_log_weights(data, joint_samples, theta)


def cappe_loglik(data: Dataset, joint_samples: JointImportanceSample, model: ExponentialFamilyModel,
                 theta: Any) -> float:
    return LikelihoodCalculator(model).cappe_loglik(data, joint_samples, theta)
