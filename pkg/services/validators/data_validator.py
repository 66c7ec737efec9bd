"""Data validation utilities for MCML datasets and experiment inputs."""

import logging
from typing import Any, List, Optional

import numpy as np

from constants.constants import SEED_UPPER_BOUND
from exceptions import ConfigError, DimensionError, InsufficientDataError
from ..models.mcml_models import Dataset
from util import group_covariates

logger = logging.getLogger(__name__)


class DataValidator:
    """Validates datasets, covariate laws and run parameters against a model."""

    @staticmethod
    def validate_dataset(data: Dataset, model) -> bool:
        """
        Check every response and covariate row against the model's domain.

        Args:
            data: Parsed dataset
            model: ExponentialFamilyModel the data will be fitted with

        Returns:
            True when the dataset is usable

        Raises:
            DomainError: a response or covariate lies outside the model's domain
        """
        logger.debug(f"🔍 Validating {data.n} observations against {model.label}")
        model.check_responses(data.responses)
        unique, _, _ = group_covariates(data.covariates)
        for x in unique:
            model.check_covariate(x)
        logger.debug(f"✅ Dataset valid: {data.n} rows, {unique.shape[0]} distinct covariates")
        return True

    @staticmethod
    def validate_covariate_law(covariates: Optional[List[List[float]]], model) -> np.ndarray:
        """
        Normalise the finite covariate list used to draw synthetic X_i.

        Args:
            covariates: List of covariate vectors, or None for the model default

        Returns:
            Array of shape (K, l) with equal-length rows
        """
        if covariates is None:
            return model.default_covariate()[None, :]
        if len(covariates) == 0:
            raise InsufficientDataError("The covariate list must not be empty")
        widths = {len(np.atleast_1d(x)) for x in covariates}
        if len(widths) != 1:
            raise DimensionError(f"Covariate vectors have differing lengths {sorted(widths)}")
        law = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x in covariates], dtype=float)
        for x in law:
            model.check_covariate(x)
        return law

    @staticmethod
    def validate_seed(seed: Any) -> int:
        """Seeds are unsigned 64-bit integers."""
        try:
            value = int(seed)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Seed must be an integer, got {seed!r}") from e
        if not 0 <= value < SEED_UPPER_BOUND:
            raise ConfigError(f"Seed must lie in [0, 2^64), got {value}")
        return value

    @staticmethod
    def validate_sizes(**sizes: int) -> None:
        """Every named size must be a positive integer."""
        for name, value in sizes.items():
            if value is None or int(value) < 1:
                logger.warning(f"❌ Invalid size {name}={value}")
                raise ConfigError(f"{name} must be >= 1, got {value}")
