"""
Plug-in estimates of V, D and W, the sandwich covariance D^-1 (V/n + W/m) D^-1,
standardisation of estimates and Wald confidence regions.
"""

import logging
from typing import Any, Callable, Optional

import numpy as np
from scipy import linalg
from scipy.stats import chi2, norm

from constants.constants import EIGEN_FLOOR, NORMING_EXACT, NORMING_MC
from exceptions import (
    ConfigError,
    InsufficientDataError,
    SingularCovarianceError,
    SingularHessianError,
)
from services.importance_service import ImportanceSampler
from services.likelihood_service import LikelihoodCalculator
from services.model_core import ExponentialFamilyModel, check_theta, exact_norming, suff_stat
from services.models import (
    ConfidenceRegion,
    Dataset,
    ImportanceSample,
    NormingTriple,
    PhiValue,
    SandwichParts,
)
from util import empirical_covariance, group_covariates, symmetrize

logger = logging.getLogger(__name__)


class AsymptoticsCalculator:
    """
    Plug-in pieces of the MCML limit law for one model.

    Every estimate takes its norming constants from either the enumeration
    oracle ('exact') or the importance sample itself ('mc').
    """

    def __init__(self, model: ExponentialFamilyModel):
        self.model = model
        self.sampler = ImportanceSampler(model)
        self.likelihood = LikelihoodCalculator(model)

    def _norming_source(self, theta: np.ndarray, source: str,
                        sample: Optional[ImportanceSample]) -> Callable[[np.ndarray], NormingTriple]:
        if source == NORMING_EXACT:
            return lambda x: exact_norming(self.model, x, theta)
        if source == NORMING_MC:
            if sample is None:
                raise ConfigError("Monte Carlo plug-ins need an importance sample")
            return lambda x: self.sampler.norming(sample, x, theta)
        raise ConfigError(f"Unknown norming source {source!r}, expected '{NORMING_EXACT}' or '{NORMING_MC}'")

    # =========================================================================
    # PHI: INFLUENCE OF THE MONTE CARLO NORMING ERROR
    # =========================================================================

    def phi(self, y: Any, x: Any, theta: Any, norming: NormingTriple, h_density: float) -> PhiValue:
        """
        phi(y|x) = (f(y|x, theta) / h(y)) [S(y, x) - grad C / C] / C.

        Args:
            y: one response point
            x: covariate
            theta: parameter vector
            norming: C(x, theta) triple (exact or Monte Carlo)
            h_density: h(y) > 0

        Returns:
            PhiValue with a length-p vector
        """
        theta = check_theta(self.model, theta)
        if not h_density > 0:
            raise ConfigError(f"h(y) must be positive, got {h_density}")
        stats = suff_stat(self.model, y, x)
        log_ratio = float(stats @ theta) - np.log(h_density) - norming.log_value
        return PhiValue(vec=np.exp(log_ratio) * ((stats - norming.anchor) - norming.offset))

    def phi_matrix(self, sample: ImportanceSample, x: Any, theta: np.ndarray, norming: NormingTriple) -> np.ndarray:
        """phi(Y^k|x) for every draw of the sample, shape (m, p)."""
        stats = self.model.statistics(sample.draws, self.model.check_covariate(x))
        ratio = np.exp(stats @ theta - sample.log_h - norming.log_value)
        return ratio[:, None] * ((stats - norming.anchor) - norming.offset)

    def phi_bar(self, data: Dataset, sample: ImportanceSample, theta: Any, plugin: str = NORMING_MC) -> np.ndarray:
        """phi_bar_k = (1/n) sum_i phi(Y^k|X_i), shape (m, p); covariate groups weighted by count/n."""
        theta = check_theta(self.model, theta)
        norming_at = self._norming_source(theta, plugin, sample)
        unique, _, counts = group_covariates(data.covariates)
        total = np.zeros((sample.m, self.model.param_dim))
        for x, count in zip(unique, counts):
            total += (count / data.n) * self.phi_matrix(sample, x, theta, norming_at(x))
        return total

    # =========================================================================
    # V, D, W
    # =========================================================================

    def estimate_V(self, data: Dataset, theta_hat: Any, norming_source: str = NORMING_EXACT,
                   sample: Optional[ImportanceSample] = None) -> np.ndarray:
        """
        Empirical covariance (1/n) of the per-observation scores S(Y_i, X_i) - grad C / C (X_i, theta_hat).

        Args:
            data: observed dataset, n >= 2
            theta_hat: point of evaluation
            norming_source: 'exact' or 'mc'
            sample: required when norming_source is 'mc'

        Returns:
            (p, p) covariance matrix
        """
        if data.n < 2:
            raise InsufficientDataError(f"estimate_V needs n >= 2 observations, got {data.n}")
        theta = check_theta(self.model, theta_hat)
        norming_at = self._norming_source(theta, norming_source, sample)
        stats = self.likelihood.observed_statistics(data)
        unique, inverse, _ = group_covariates(data.covariates)
        scores = np.empty_like(stats)
        for g, x in enumerate(unique):
            triple = norming_at(x)
            rows = inverse == g
            scores[rows] = (stats[rows] - triple.anchor) - triple.offset
        return empirical_covariance(scores)

    def estimate_D(self, data: Dataset, theta_hat: Any, norming_source: str = NORMING_EXACT,
                   sample: Optional[ImportanceSample] = None) -> np.ndarray:
        """(1/n) sum_i -Hess log C(X_i, theta_hat); depends on the covariates only."""
        p = self.model.param_dim
        theta = check_theta(self.model, theta_hat)
        norming_at = self._norming_source(theta, norming_source, sample)
        unique, _, counts = group_covariates(data.covariates)
        D = np.zeros((p, p))
        for x, count in zip(unique, counts):
            D -= count * norming_at(x).log_hess
        return symmetrize(D / data.n)

    def estimate_W(self, data: Dataset, sample: ImportanceSample, theta_hat: Any,
                   plugin: str = NORMING_MC) -> np.ndarray:
        """
        Empirical covariance over draws of phi_bar_k.

        plugin 'mc' uses C_m and grad C_m from the same sample; 'exact' uses the
        enumeration oracle.
        """
        if sample.m < 2:
            raise InsufficientDataError(f"estimate_W needs m >= 2 draws, got {sample.m}")
        return empirical_covariance(self.phi_bar(data, sample, theta_hat, plugin))

    def estimate_W_no_covariates(self, sample: ImportanceSample, theta_hat: Any, covariate: Any = None,
                                 plugin: str = NORMING_MC) -> np.ndarray:
        """W = Var_h[grad f / h - (grad C / C)(f / h)] / C^2 at a single fixed covariate."""
        if sample.m < 2:
            raise InsufficientDataError(f"estimate_W needs m >= 2 draws, got {sample.m}")
        model = self.model
        theta = check_theta(model, theta_hat)
        x = model.default_covariate() if covariate is None else model.check_covariate(covariate)
        triple = self._norming_source(theta, plugin, sample)(x)
        stats = model.statistics(sample.draws, x)
        ratio = np.exp(stats @ theta - sample.log_h)
        grad_f_over_h = ratio[:, None] * stats
        centred = grad_f_over_h - triple.log_grad * ratio[:, None]
        return empirical_covariance(centred) * np.exp(-2.0 * triple.log_value)

    def estimate_W_tilde(self, data: Dataset, sample: ImportanceSample, theta_hat: Any,
                         plugin: str = NORMING_MC) -> float:
        """Empirical E_{Y~h, X~g} |phi(Y|X)|^2; a moment diagnostic, not part of any result."""
        theta = check_theta(self.model, theta_hat)
        norming_at = self._norming_source(theta, plugin, sample)
        unique, _, counts = group_covariates(data.covariates)
        moment = 0.0
        for x, count in zip(unique, counts):
            values = self.phi_matrix(sample, x, theta, norming_at(x))
            moment += (count / data.n) * float(np.mean(np.sum(values ** 2, axis=1)))
        logger.debug(f"W_tilde diagnostic for {self.model.label}: {moment:.6g}")
        return moment

    def build_sandwich_parts(self, data: Dataset, sample: ImportanceSample, theta_hat: Any,
                             norming_source: str = NORMING_MC) -> SandwichParts:
        """
        V_hat, D_hat and W_hat at theta_hat.

        Args:
            data: observed dataset
            sample: the sample the MCML fit used
            theta_hat: fitted parameter
            norming_source: plug-in for V and D; W always uses the sample's own

        Returns:
            SandwichParts carrying n and m
        """
        V_hat = self.estimate_V(data, theta_hat, norming_source, sample)
        D_hat = self.estimate_D(data, theta_hat, norming_source, sample)
        W_hat = self.estimate_W(data, sample, theta_hat, plugin=NORMING_MC)
        if logger.isEnabledFor(logging.DEBUG):
            self.estimate_W_tilde(data, sample, theta_hat)
        return SandwichParts(V_hat=V_hat, D_hat=D_hat, W_hat=W_hat, n=data.n, m=sample.m)

    # =========================================================================
    # SANDWICH, STANDARDISATION, REGIONS
    # =========================================================================

    @staticmethod
    def _inner(parts: SandwichParts) -> np.ndarray:
        return symmetrize(parts.V_hat / parts.n + parts.W_hat / parts.m)

    @staticmethod
    def sandwich_cov(parts: SandwichParts) -> np.ndarray:
        """
        D^-1 (V/n + W/m) D^-1, symmetrised.

        Raises:
            SingularHessianError: D_hat cannot be inverted reliably
        """
        D = symmetrize(parts.D_hat)
        try:
            D_inv = linalg.inv(D)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularHessianError(f"D_hat cannot be inverted: {e}") from e
        if not np.all(np.isfinite(D_inv)) or np.linalg.cond(D) > 1.0 / np.finfo(float).eps:
            raise SingularHessianError(f"D_hat is singular (condition number {np.linalg.cond(D):.3e})")
        return symmetrize(D_inv @ AsymptoticsCalculator._inner(parts) @ D_inv)

    @staticmethod
    def standardize(theta_hat: Any, theta_ref: Any, parts: SandwichParts) -> np.ndarray:
        """
        (V/n + W/m)^(-1/2) D (theta_hat - theta_ref) with the symmetric inverse square root.

        Raises:
            SingularCovarianceError: an eigenvalue of V/n + W/m is below the floor
        """
        delta = np.atleast_1d(np.asarray(theta_hat, dtype=float)) - np.atleast_1d(np.asarray(theta_ref, dtype=float))
        eigenvalues, eigenvectors = linalg.eigh(AsymptoticsCalculator._inner(parts))
        if eigenvalues.min() < EIGEN_FLOOR:
            raise SingularCovarianceError(
                f"V/n + W/m is not positive definite (smallest eigenvalue {eigenvalues.min():.3e})"
            )
        inv_sqrt = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T
        return inv_sqrt @ (parts.D_hat @ delta)

    @staticmethod
    def confidence_region(theta_hat: Any, cov: np.ndarray, level: float) -> ConfidenceRegion:
        """
        Wald intervals theta_j +- z sqrt(cov_jj) and the chi-square(p) ellipsoid radius.

        Args:
            theta_hat: centre
            cov: sandwich covariance
            level: coverage level in (0, 1)

        Returns:
            ConfidenceRegion with intervals and ellipsoid radius
        """
        if not 0.0 < level < 1.0:
            raise ConfigError(f"level must lie in (0, 1), got {level}")
        center = np.atleast_1d(np.asarray(theta_hat, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        z = norm.ppf(0.5 * (1.0 + level))
        half_width = z * np.sqrt(np.clip(np.diag(cov), 0.0, None))
        return ConfidenceRegion(
            center=center,
            lower=center - half_width,
            upper=center + half_width,
            half_width=half_width,
            radius=float(np.sqrt(chi2.ppf(level, center.size))),
            level=float(level),
            covariance=cov,
        )


def phi(model: ExponentialFamilyModel, y: Any, x: Any, theta: Any, norming: NormingTriple,
        h_density: float) -> PhiValue:
    return AsymptoticsCalculator(model).phi(y, x, theta, norming, h_density)


def phi_bar(data: Dataset, sample: ImportanceSample, model: ExponentialFamilyModel, theta: Any,
            plugin: str = NORMING_MC) -> np.ndarray:
    return AsymptoticsCalculator(model).phi_bar(data, sample, theta, plugin)


def estimate_V(data: Dataset, model: ExponentialFamilyModel, theta_hat: Any,
               norming_source: str = NORMING_EXACT, sample: Optional[ImportanceSample] = None) -> np.ndarray:
    return AsymptoticsCalculator(model).estimate_V(data, theta_hat, norming_source, sample)


def estimate_D(data: Dataset, model: ExponentialFamilyModel, theta_hat: Any,
               norming_source: str = NORMING_EXACT, sample: Optional[ImportanceSample] = None) -> np.ndarray:
    return AsymptoticsCalculator(model).estimate_D(data, theta_hat, norming_source, sample)


def estimate_W(data: Dataset, sample: ImportanceSample, model: ExponentialFamilyModel, theta_hat: Any,
               plugin: str = NORMING_MC) -> np.ndarray:
    return AsymptoticsCalculator(model).estimate_W(data, sample, theta_hat, plugin)


def estimate_W_no_covariates(sample: ImportanceSample, model: ExponentialFamilyModel, theta_hat: Any,
                             covariate: Any = None, plugin: str = NORMING_MC) -> np.ndarray:
    return AsymptoticsCalculator(model).estimate_W_no_covariates(sample, theta_hat, covariate, plugin)


def estimate_W_tilde(data: Dataset, sample: ImportanceSample, model: ExponentialFamilyModel, theta_hat: Any,
                     plugin: str = NORMING_MC) -> float:
    return AsymptoticsCalculator(model).estimate_W_tilde(data, sample, theta_hat, plugin)


def build_sandwich_parts(data: Dataset, sample: ImportanceSample, model: ExponentialFamilyModel,
                         theta_hat: Any, norming_source: str = NORMING_MC) -> SandwichParts:
    return AsymptoticsCalculator(model).build_sandwich_parts(data, sample, theta_hat, norming_source)


sandwich_cov = AsymptoticsCalculator.sandwich_cov
standardize = AsymptoticsCalculator.standardize
confidence_region = AsymptoticsCalculator.confidence_region
