"""Validators for datasets and harness inputs."""

from .data_validator import DataValidator

__all__ = ['DataValidator']
