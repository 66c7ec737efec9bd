"""Data models for MCML estimation."""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from constants.constants import (
    DEFAULT_DIVERGENCE_BOUND,
    DEFAULT_GRAD_TOL,
    DEFAULT_MAX_ITER,
    DEFAULT_STEP_HALVING_MAX,
    DEFAULT_STEP_TOL,
)
from exceptions import ConfigError, DimensionError, DominationError, InsufficientDataError
from util import as_rows


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Dataset:
    """n independent observations (Y_i, X_i); responses are integer vectors."""
    responses: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        responses = np.asarray(self.responses)
        if responses.ndim == 1:
            responses = responses.reshape(-1, 1)
        covariates = as_rows(self.covariates, responses.shape[0])
        if responses.shape[0] < 1:
            raise InsufficientDataError("A dataset needs at least one observation")
        if covariates.shape[0] != responses.shape[0]:
            raise DimensionError(
                f"{responses.shape[0]} responses but {covariates.shape[0]} covariate rows"
            )
        object.__setattr__(self, 'responses', _frozen(responses.astype(np.int64, copy=True)))
        object.__setattr__(self, 'covariates', _frozen(covariates.copy()))

    @property
    def n(self) -> int:
        return int(self.responses.shape[0])


@dataclass(frozen=True)
class NormingTriple:
    """
    Norming constant C with its gradient and Hessian in theta.

    Stored as log C, the normalised first moment grad/C = anchor + offset and
    the covariance hess/C - (grad/C)(grad/C)^T, so large exponents never
    overflow; the raw value/grad/hess are derived on demand.
    """
    log_value: float
    anchor: np.ndarray
    offset: np.ndarray
    log_hess: np.ndarray

    @property
    def log_grad(self) -> np.ndarray:
        """grad log C = grad C / C."""
        return self.anchor + self.offset

    def centred_sum(self, total: np.ndarray, count: int) -> np.ndarray:
        """total - count * grad log C without cancelling the offset."""
        return (np.asarray(total, dtype=float) - count * self.anchor) - count * self.offset

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))

    @property
    def grad(self) -> np.ndarray:
        return self.value * self.log_grad

    @property
    def hess(self) -> np.ndarray:
        second_moment = self.log_hess + np.outer(self.log_grad, self.log_grad)
        return self.value * second_moment


@dataclass(frozen=True)
class ImportanceSample:
    """Instrumental draws Y^1..Y^m with their log densities log h(Y^k)."""
    draws: np.ndarray
    log_h: np.ndarray
    seed_tag: str = ''

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.int64)
        if draws.ndim == 1:
            draws = draws.reshape(-1, 1)
        log_h = np.asarray(self.log_h, dtype=float).reshape(-1)
        if draws.shape[0] < 1:
            raise InsufficientDataError("An importance sample needs m >= 1 draws")
        if log_h.shape[0] != draws.shape[0]:
            raise DimensionError(f"{draws.shape[0]} draws but {log_h.shape[0]} log densities")
        if not np.all(np.isfinite(log_h)):
            raise DominationError("Instrumental log densities must be finite")
        object.__setattr__(self, 'draws', _frozen(draws.copy()))
        object.__setattr__(self, 'log_h', _frozen(log_h.copy()))

    @property
    def m(self) -> int:
        return int(self.draws.shape[0])


@dataclass(frozen=True)
class JointImportanceSample:
    """Per-observation draws Y_i^k ~ h_i: draws (m, n, d), log_h (m, n)."""
    draws: np.ndarray
    log_h: np.ndarray
    seed_tag: str = ''

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.int64)
        log_h = np.asarray(self.log_h, dtype=float)
        if draws.ndim != 3 or log_h.shape != draws.shape[:2]:
            raise DimensionError(f"Joint draws {draws.shape} do not match log densities {log_h.shape}")
        if draws.shape[0] < 1:
            raise InsufficientDataError("A joint sample needs m >= 1 draws per observation")
        object.__setattr__(self, 'draws', _frozen(draws.copy()))
        object.__setattr__(self, 'log_h', _frozen(log_h.copy()))

    @property
    def m(self) -> int:
        return int(self.draws.shape[0])

    @property
    def n(self) -> int:
        return int(self.draws.shape[1])

    @classmethod
    def from_shared(cls, sample: ImportanceSample) -> 'JointImportanceSample':
        """One-observation joint sample reusing a shared sample's draws."""
        return cls(
            draws=sample.draws[:, None, :],
            log_h=sample.log_h[:, None],
            seed_tag=sample.seed_tag,
        )


@dataclass(frozen=True)
class ObjectiveEval:
    """Log-likelihood value with score and Hessian."""
    value: float
    score: np.ndarray
    hess: np.ndarray
    n: int = 1

    def scaled(self) -> 'ObjectiveEval':
        """The 1/n-scaled objective."""
        return ObjectiveEval(
            value=self.value / self.n,
            score=self.score / self.n,
            hess=self.hess / self.n,
            n=1,
        )


@dataclass
class FitOptions:
    """Newton options; init None means the zero vector."""
    init: Optional[np.ndarray] = None
    grad_tol: float = DEFAULT_GRAD_TOL
    max_iter: int = DEFAULT_MAX_ITER
    step_halving_max: int = DEFAULT_STEP_HALVING_MAX
    step_tol: float = DEFAULT_STEP_TOL
    divergence_bound: float = DEFAULT_DIVERGENCE_BOUND

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ConfigError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.step_halving_max < 1:
            raise ConfigError(f"step_halving_max must be >= 1, got {self.step_halving_max}")
        if not self.step_tol > 0 or not self.divergence_bound > 0:
            raise ConfigError("step_tol and divergence_bound must be positive")


@dataclass(frozen=True)
class TraceEntry:
    """One Newton iteration."""
    theta: np.ndarray
    value: float
    grad_norm: float
    step: float = 0.0
    direction: str = 'newton'


@dataclass(frozen=True)
class SandwichParts:
    """Plug-in V, D, W with the sample sizes that scale them."""
    V_hat: np.ndarray
    D_hat: np.ndarray
    W_hat: np.ndarray
    n: int
    m: int

    def diagnostics(self) -> List[str]:
        """Warnings for a D_hat that is not negative definite."""
        eigenvalues = np.linalg.eigvalsh(0.5 * (self.D_hat + self.D_hat.T))
        if np.any(eigenvalues >= 0):
            return [f"D_hat is not negative definite (largest eigenvalue {eigenvalues.max():.3e})"]
        return []


@dataclass(frozen=True)
class PhiValue:
    """Influence vector of the Monte Carlo norming error at one (y, x)."""
    vec: np.ndarray


@dataclass
class FitResult:
    """MCML (or exact ML) estimate with its convergence trace."""
    theta_hat: np.ndarray
    converged: bool
    iterations: int
    final_grad_norm: float
    value: float
    trace: List[TraceEntry] = field(default_factory=list)
    n: int = 0
    m: Optional[int] = None
    sandwich: Optional[SandwichParts] = None
    covariance: Optional[np.ndarray] = None
    diagnostics: List[str] = field(default_factory=list)

    @property
    def standard_errors(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


@dataclass(frozen=True)
class ConfidenceRegion:
    """Wald intervals per coordinate plus the chi-square ellipsoid."""
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    half_width: np.ndarray
    radius: float
    level: float
    covariance: np.ndarray

    def covers(self, theta: np.ndarray) -> Tuple[np.ndarray, bool]:
        """Per-coordinate hit flags and ellipsoid membership of theta."""
        theta = np.asarray(theta, dtype=float)
        hits = (self.lower <= theta) & (theta <= self.upper)
        delta = theta - self.center
        distance_sq = float(delta @ np.linalg.pinv(self.covariance) @ delta)
        return hits, bool(distance_sq <= self.radius ** 2)
