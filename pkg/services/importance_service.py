"""Instrumental sampling and the importance-sampling norming estimator C_m(x, theta)."""

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from constants.constants import INSTRUMENTAL_MODEL_AT, INSTRUMENTAL_UNIFORM
from exceptions import ConfigError, DominationError, NoOracleError
from services.model_core import ExponentialFamilyModel, check_theta, exact_norming
from services.models import ImportanceSample, JointImportanceSample, NormingTriple
from util import weighted_moments

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Instrumental:
    """
    Importance-sampling proposal h.

    kind 'model_at' is h = p(.|covariate, psi); kind 'uniform' is uniform on
    the model support. h never depends on the observation's covariate.
    """
    kind: str
    psi: Optional[np.ndarray] = None
    covariate: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in (INSTRUMENTAL_MODEL_AT, INSTRUMENTAL_UNIFORM):
            raise ConfigError(f"Unknown instrumental kind {self.kind!r}")
        if self.kind == INSTRUMENTAL_MODEL_AT and self.psi is None:
            raise ConfigError("model_at instrumental needs psi")
        if self.psi is not None:
            object.__setattr__(self, 'psi', np.atleast_1d(np.asarray(self.psi, dtype=float)))
        if self.covariate is not None:
            object.__setattr__(self, 'covariate', np.atleast_1d(np.asarray(self.covariate, dtype=float)))

    @classmethod
    def model_at(cls, psi: Any, covariate: Any = None) -> 'Instrumental':
        return cls(kind=INSTRUMENTAL_MODEL_AT, psi=psi, covariate=covariate)

    @classmethod
    def uniform(cls) -> 'Instrumental':
        return cls(kind=INSTRUMENTAL_UNIFORM)

    def _covariate(self, model: ExponentialFamilyModel) -> np.ndarray:
        if self.covariate is None:
            return model.default_covariate()
        return model.check_covariate(self.covariate)

    def log_density(self, model: ExponentialFamilyModel, responses: Any) -> np.ndarray:
        """log h(y) for each response row."""
        responses = model.check_responses(responses)
        support = model.support
        if support is None:
            raise NoOracleError(f"{model.label}: instrumental density needs an enumerable support")
        if self.kind == INSTRUMENTAL_UNIFORM:
            return np.full(responses.shape[0], -np.log(support.shape[0]))
        psi = check_theta(model, self.psi)
        x = self._covariate(model)
        log_c = exact_norming(model, x, psi).log_value
        return model.statistics(responses, x) @ psi - log_c

    def density(self, model: ExponentialFamilyModel, y: Any) -> float:
        """h(y) at a single response point."""
        return float(np.exp(self.log_density(model, np.reshape(y, (1, -1)))[0]))

    def support_log_density(self, model: ExponentialFamilyModel) -> np.ndarray:
        support = model.support
        if support is None:
            raise NoOracleError(f"{model.label}: cannot sample h without an enumerable support")
        return self.log_density(model, support)


class ImportanceSampler:
    """Draws from an instrumental h and evaluates the norming estimator C_m for one model."""

    def __init__(self, model: ExponentialFamilyModel):
        self.model = model

    def draw(self, instr: Instrumental, m: int, rng: np.random.Generator, seed_tag: str = '') -> ImportanceSample:
        """
        m i.i.d. draws from h by inverse CDF over the enumerated support.

        Args:
            instr: the instrumental h
            m: number of draws, at least 1
            rng: stream the uniforms come from
            seed_tag: provenance label stored on the sample

        Returns:
            ImportanceSample holding the draws and log h at each draw

        Raises:
            ConfigError: m < 1
            DominationError: h vanishes somewhere on the support
        """
        if m < 1:
            raise ConfigError(f"m must be >= 1, got {m}")
        model = self.model
        log_support = instr.support_log_density(model)
        if not np.all(np.isfinite(log_support)):
            raise DominationError(f"{instr.kind} instrumental vanishes on part of the {model.label} support")

        cdf = np.cumsum(np.exp(log_support - log_support.max()))
        indices = np.minimum(np.searchsorted(cdf, rng.random(m) * cdf[-1], side='right'), cdf.size - 1)
        logger.debug(f"Drew {m} instrumental points ({instr.kind}) for {model.label}")
        return ImportanceSample(draws=model.support[indices], log_h=log_support[indices], seed_tag=seed_tag)

    def draw_joint(self, instr: Instrumental, n: int, m: int, rng: np.random.Generator,
                   seed_tag: str = '') -> JointImportanceSample:
        """m draws for each of n observations, every h_i equal to h; draws shaped (m, n, d)."""
        flat = self.draw(instr, m * n, rng, seed_tag)
        return JointImportanceSample(
            draws=flat.draws.reshape(m, n, self.model.response_dim),
            log_h=flat.log_h.reshape(m, n),
            seed_tag=seed_tag,
        )

    def norming(self, sample: ImportanceSample, x: Any, theta: Any) -> NormingTriple:
        """
        C_m(x, theta) = (1/m) sum_k f(Y^k|x, theta) / h(Y^k) with gradient and Hessian.

        One pass over the frozen sample; weights are exp(theta^T S - log h - shift)
        with the shift added back in log space.

        Args:
            sample: draws from h
            x: covariate row
            theta: parameter vector

        Returns:
            NormingTriple for C_m and its derivatives
        """
        model = self.model
        theta = check_theta(model, theta)
        stats = model.statistics(sample.draws, model.check_covariate(x))
        log_weights = stats @ theta - sample.log_h
        log_value, anchor, offset, covariance = weighted_moments(log_weights, stats, float(sample.m))
        return NormingTriple(log_value=log_value, anchor=anchor, offset=offset, log_hess=covariance)

    def log_norming_error(self, sample: ImportanceSample, x: Any, theta: Any) -> float:
        """r^m = log C_m(x, theta) - log C(x, theta), using the exact oracle."""
        return self.norming(sample, x, theta).log_value - exact_norming(self.model, x, theta).log_value


def draw_instrumental(instr: Instrumental, model: ExponentialFamilyModel, m: int,
                      rng: np.random.Generator, seed_tag: str = '') -> ImportanceSample:
    return ImportanceSampler(model).draw(instr, m, rng, seed_tag)


def draw_joint_instrumental(instr: Instrumental, model: ExponentialFamilyModel, n: int, m: int,
                            rng: np.random.Generator, seed_tag: str = '') -> JointImportanceSample:
    return ImportanceSampler(model).draw_joint(instr, n, m, rng, seed_tag)


def mc_norming(sample: ImportanceSample, model: ExponentialFamilyModel, x: Any, theta: Any) -> NormingTriple:
    return ImportanceSampler(model).norming(sample, x, theta)


def mc_log_norming_error(sample: ImportanceSample, model: ExponentialFamilyModel, x: Any, theta: Any) -> float:
    return ImportanceSampler(model).log_norming_error(sample, x, theta)
