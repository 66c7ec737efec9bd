"""
Exponential-family models f(y|x, theta) = exp(theta^T S(y, x)) and exact oracles.

S(y, x) is the sufficient statistic. Models with a finite support get
brute-force oracles for C(x, theta) and its derivatives.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from constants.constants import (
    MAX_SUPPORT_SITES,
    MODEL_KIND_AUTOLOGISTIC,
    MODEL_KIND_FINITE,
    MODEL_KIND_TOY,
)
from exceptions import (
    ConfigError,
    DegenerateDataError,
    DimensionError,
    DomainError,
    NoOracleError,
)
from services.models import Dataset, NormingTriple
from util import as_rows, group_covariates, weighted_moments

logger = logging.getLogger(__name__)


class ExponentialFamilyModel(ABC):
    """Base class: parameter dimension p, response dimension d, optional finite support."""

    def __init__(self, label: str, param_dim: int, response_dim: int):
        if param_dim < 1:
            raise ConfigError(f"param_dim must be positive, got {param_dim}")
        self.label = label
        self.param_dim = int(param_dim)
        self.response_dim = int(response_dim)

    @property
    def support(self) -> Optional[np.ndarray]:
        """All response points as a (K, d) integer array, or None if not enumerable."""
        return None

    @property
    def covariate_free(self) -> bool:
        """True when S(y, x) does not depend on x."""
        return False

    @abstractmethod
    def statistics(self, responses: np.ndarray, covariate: np.ndarray) -> np.ndarray:
        """S(y, x) for validated responses (k, d) at one covariate; returns (k, p)."""

    def default_covariate(self) -> np.ndarray:
        return np.zeros(0)

    def check_covariate(self, covariate: Any) -> np.ndarray:
        return np.atleast_1d(np.asarray(covariate, dtype=float)).reshape(-1)

    def check_responses(self, responses: Any) -> np.ndarray:
        """Coerce to a (k, d) integer array and reject points outside the domain."""
        raw = np.asarray(responses)
        if raw.ndim <= 1:
            raw = raw.reshape(-1, self.response_dim) if raw.size % self.response_dim == 0 else raw.reshape(1, -1)
        if raw.ndim != 2 or raw.shape[1] != self.response_dim:
            raise DomainError(
                f"{self.label}: responses must have {self.response_dim} entries, got shape {raw.shape}"
            )
        as_int = raw.astype(np.int64)
        if not np.array_equal(as_int, raw):
            raise DomainError(f"{self.label}: responses must be integers")
        self._check_membership(as_int)
        return as_int

    def _check_membership(self, responses: np.ndarray) -> None:
        if np.any((responses != 0) & (responses != 1)):
            raise DomainError(f"{self.label}: responses must be binary")

    def support_statistics(self, covariate: np.ndarray) -> np.ndarray:
        support = self.support
        if support is None:
            raise NoOracleError(f"{self.label}: no enumerable support, exact oracle unavailable")
        return self.statistics(support, covariate)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(label={self.label!r}, p={self.param_dim})"


class ToyBernoulliModel(ExponentialFamilyModel):
    """f(y|theta) = exp(theta * y) on {0, 1}; C(theta) = 1 + e^theta."""

    _SUPPORT = np.array([[0], [1]], dtype=np.int64)

    def __init__(self):
        super().__init__(label=MODEL_KIND_TOY, param_dim=1, response_dim=1)

    @property
    def support(self) -> np.ndarray:
        return self._SUPPORT

    @property
    def covariate_free(self) -> bool:
        return True

    def statistics(self, responses: np.ndarray, covariate: np.ndarray) -> np.ndarray:
        return responses[:, :1].astype(float)


class AutologisticModel(ExponentialFamilyModel):
    """
    Binary Markov random field on an r x c lattice, 4-neighbourhood, no wraparound.

    S(y, x) = (sum_i y_i x_i, sum_{i~j} y_i y_j). The covariate is either one
    value shared by every site or one value per site (row-major).
    """

    def __init__(self, rows: int, cols: int):
        if rows < 1 or cols < 1:
            raise ConfigError(f"Lattice must be at least 1x1, got {rows}x{cols}")
        super().__init__(label=f"{MODEL_KIND_AUTOLOGISTIC}-{rows}x{cols}", param_dim=2, response_dim=rows * cols)
        self.rows = rows
        self.cols = cols
        self.edges = self._lattice_edges(rows, cols)
        self._support: Optional[np.ndarray] = None
        self._support_pairs: Optional[np.ndarray] = None

    @staticmethod
    def _lattice_edges(rows: int, cols: int) -> np.ndarray:
        edges = []
        for r in range(rows):
            for c in range(cols):
                site = r * cols + c
                if c + 1 < cols:
                    edges.append((site, site + 1))
                if r + 1 < rows:
                    edges.append((site, site + cols))
        return np.array(edges, dtype=np.intp).reshape(-1, 2)

    @property
    def sites(self) -> int:
        return self.response_dim

    @property
    def support(self) -> Optional[np.ndarray]:
        if self.sites > MAX_SUPPORT_SITES:
            return None
        if self._support is None:
            codes = np.arange(2 ** self.sites, dtype=np.int64)
            support = (codes[:, None] >> np.arange(self.sites)) & 1
            support.setflags(write=False)
            self._support_pairs = self._pair_counts(support)
            self._support = support
            logger.debug(f"Enumerated {support.shape[0]} states for {self.label}")
        return self._support

    def default_covariate(self) -> np.ndarray:
        return np.ones(1)

    def check_covariate(self, covariate: Any) -> np.ndarray:
        x = np.atleast_1d(np.asarray(covariate, dtype=float)).reshape(-1)
        if x.size == 0:
            return self.default_covariate()
        if x.size not in (1, self.sites):
            raise DomainError(f"{self.label}: covariate must have 1 or {self.sites} entries, got {x.size}")
        return x

    def _pair_counts(self, responses: np.ndarray) -> np.ndarray:
        if self.edges.size == 0:
            return np.zeros(responses.shape[0])
        return (responses[:, self.edges[:, 0]] * responses[:, self.edges[:, 1]]).sum(axis=1).astype(float)

    def statistics(self, responses: np.ndarray, covariate: np.ndarray) -> np.ndarray:
        weights = np.broadcast_to(covariate, (self.sites,))
        main = responses @ weights
        if self._support_pairs is not None and responses is self._support:
            pairs = self._support_pairs
        else:
            pairs = self._pair_counts(responses)
        return np.column_stack([main, pairs])


class FiniteFamilyModel(ExponentialFamilyModel):
    """User-supplied finite support with one statistic row per state; S does not depend on x."""

    def __init__(self, states: Sequence[Sequence[int]], statistics: Sequence[Sequence[float]], label: str = MODEL_KIND_FINITE):
        if states is None or statistics is None:
            raise ConfigError("A finite model needs both states and statistics")
        try:
            states_arr = np.asarray(states)
            stats_arr = np.asarray(statistics, dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Finite model states and statistics must be rectangular: {e}") from e
        if states_arr.ndim == 1:
            states_arr = states_arr.reshape(-1, 1)
        if states_arr.ndim != 2:
            raise ConfigError(f"Finite model states must be a list of integer vectors, got shape {states_arr.shape}")
        if states_arr.shape[0] == 0:
            raise ConfigError("A finite model needs a nonempty state list")
        if stats_arr.ndim != 2 or stats_arr.shape[0] != states_arr.shape[0]:
            raise DimensionError(
                f"Need one statistic row per state: {states_arr.shape[0]} states, statistics shape {stats_arr.shape}"
            )
        if not np.array_equal(states_arr.astype(np.int64), states_arr):
            raise ConfigError("Finite model states must be integer vectors")
        states_arr = states_arr.astype(np.int64)
        index: Dict[tuple, int] = {}
        for k, state in enumerate(map(tuple, states_arr)):
            if state in index:
                raise ConfigError(f"Duplicate state {state} in finite model")
            index[state] = k
        super().__init__(label=label, param_dim=stats_arr.shape[1], response_dim=states_arr.shape[1])
        states_arr.setflags(write=False)
        stats_arr.setflags(write=False)
        self._states = states_arr
        self._stats = stats_arr
        self._index = index

    @property
    def support(self) -> np.ndarray:
        return self._states

    @property
    def covariate_free(self) -> bool:
        return True

    def _check_membership(self, responses: np.ndarray) -> None:
        for row in map(tuple, responses):
            if row not in self._index:
                raise DomainError(f"{self.label}: state {row} is not in the support")

    def statistics(self, responses: np.ndarray, covariate: np.ndarray) -> np.ndarray:
        if responses is self._states:
            return self._stats
        rows = [self._index[row] for row in map(tuple, responses)]
        return self._stats[rows]

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'FiniteFamilyModel':
        """Build from {'param_dim', 'states', 'statistics', optional 'label'}."""
        try:
            model = cls(config['states'], config['statistics'], config.get('label') or MODEL_KIND_FINITE)
        except KeyError as e:
            raise ConfigError(f"Finite model config is missing {e}") from e
        declared = config.get('param_dim')
        if declared is not None and int(declared) != model.param_dim:
            raise DimensionError(f"param_dim {declared} does not match statistics width {model.param_dim}")
        return model


def build_model(kind: str, rows: Optional[int] = None, cols: Optional[int] = None,
                states: Optional[List] = None, statistics: Optional[List] = None,
                param_dim: Optional[int] = None, label: Optional[str] = None) -> ExponentialFamilyModel:
    """Factory for the builtin model kinds."""
    if kind == MODEL_KIND_TOY:
        return ToyBernoulliModel()
    if kind == MODEL_KIND_AUTOLOGISTIC:
        if rows is None or cols is None:
            raise ConfigError("Autologistic model needs rows and cols")
        return AutologisticModel(rows, cols)
    if kind == MODEL_KIND_FINITE:
        return FiniteFamilyModel.from_config(
            {'states': states, 'statistics': statistics, 'param_dim': param_dim, 'label': label}
        )
    raise ConfigError(f"Unknown model kind {kind!r}")


# =============================================================================
# OPERATIONS
# =============================================================================

def check_theta(model: ExponentialFamilyModel, theta: Any) -> np.ndarray:
    """Coerce theta to a finite float vector of length p."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).reshape(-1)
    if theta.size != model.param_dim:
        raise DimensionError(f"{model.label}: theta has {theta.size} entries, expected {model.param_dim}")
    if not np.all(np.isfinite(theta)):
        raise DomainError(f"{model.label}: theta must be finite, got {theta}")
    return theta


def suff_stat(model: ExponentialFamilyModel, y: Any, x: Any) -> np.ndarray:
    """S(y, x) as a vector of length p."""
    responses = model.check_responses(np.reshape(y, (1, -1)))
    return model.statistics(responses, model.check_covariate(x))[0].copy()


def log_unnorm_density(model: ExponentialFamilyModel, y: Any, x: Any, theta: Any) -> float:
    """log f(y|x, theta) = theta^T S(y, x)."""
    theta = check_theta(model, theta)
    return float(theta @ suff_stat(model, y, x))


def exact_norming(model: ExponentialFamilyModel, x: Any, theta: Any) -> NormingTriple:
    """C(x, theta) with gradient and Hessian by summation over the support."""
    theta = check_theta(model, theta)
    stats = model.support_statistics(model.check_covariate(x))
    log_value, anchor, offset, covariance = weighted_moments(stats @ theta, stats, 1.0)
    return NormingTriple(log_value=log_value, anchor=anchor, offset=offset, log_hess=covariance)


def log_density(model: ExponentialFamilyModel, y: Any, x: Any, theta: Any) -> float:
    """log p(y|x, theta) through the exact oracle."""
    return log_unnorm_density(model, y, x, theta) - exact_norming(model, x, theta).log_value


def fisher_information(model: ExponentialFamilyModel, x: Any, theta: Any) -> np.ndarray:
    """-Hessian of log p(y|x, theta) in theta, i.e. Var_theta S(Y, x)."""
    return exact_norming(model, x, theta).log_hess


def _support_cdf(model: ExponentialFamilyModel, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    stats = model.support_statistics(x)
    exponent = stats @ theta
    weights = np.exp(exponent - exponent.max())
    return np.cumsum(weights)


def sample_response(model: ExponentialFamilyModel, x: Any, theta: Any, rng: np.random.Generator) -> np.ndarray:
    """One draw from p(.|x, theta) by inverse CDF over the enumerated support."""
    theta = check_theta(model, theta)
    cdf = _support_cdf(model, model.check_covariate(x), theta)
    index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right'))
    return model.support[min(index, cdf.size - 1)].copy()


def sample_responses(model: ExponentialFamilyModel, covariates: np.ndarray, theta: Any,
                     rng: np.random.Generator) -> np.ndarray:
    """
    One draw from p(.|x_i, theta) per covariate row; returns (n, d).

    All n uniforms are taken from the stream up front, so the draws do not
    depend on how covariate rows happen to group.
    """
    theta = check_theta(model, theta)
    covariates = as_rows(covariates, np.shape(covariates)[0])
    uniforms = rng.random(covariates.shape[0])
    unique, inverse, _ = group_covariates(covariates)
    indices = np.empty(covariates.shape[0], dtype=np.intp)
    for g, x in enumerate(unique):
        cdf = _support_cdf(model, model.check_covariate(x), theta)
        rows = inverse == g
        indices[rows] = np.minimum(np.searchsorted(cdf, uniforms[rows] * cdf[-1], side='right'), cdf.size - 1)
    return model.support[indices].copy()


def simulate_dataset(model: ExponentialFamilyModel, covariates: np.ndarray, theta: Any,
                     rng: np.random.Generator) -> Dataset:
    """Dataset with responses drawn at the given covariate rows."""
    covariates = np.asarray(covariates, dtype=float)
    return Dataset(responses=sample_responses(model, covariates, theta, rng), covariates=covariates)


def toy_closed_form(ybar_n: float, ybar_m: float, psi: float) -> float:
    """
    MCML estimate for the toy model with h = p(.|psi):
    logit(ybar_n) + psi - logit(ybar_m).
    """
    for name, mean in (('ybar_n', ybar_n), ('ybar_m', ybar_m)):
        if not 0.0 < mean < 1.0:
            raise DegenerateDataError(f"{name}={mean} must lie strictly inside (0, 1)")
    return float(np.log(ybar_n / (1.0 - ybar_n)) + psi - np.log(ybar_m / (1.0 - ybar_m)))
