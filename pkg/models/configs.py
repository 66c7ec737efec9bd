"""Experiment configuration models (JSON files validated with pydantic)"""

from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from constants.constants import (
    DEFAULT_DIVERGENCE_BOUND,
    DEFAULT_GRAD_TOL,
    DEFAULT_LEVEL,
    DEFAULT_M,
    DEFAULT_MAX_ITER,
    DEFAULT_N,
    DEFAULT_REPLICATIONS,
    DEFAULT_STEP_HALVING_MAX,
    DEFAULT_STEP_TOL,
    DEFAULT_WORKERS,
    INSTRUMENTAL_MODEL_AT,
    INSTRUMENTAL_UNIFORM,
    MODEL_KIND_AUTOLOGISTIC,
    MODEL_KIND_FINITE,
    MODEL_KIND_TOY,
    SEED_UPPER_BOUND,
)
from exceptions import ConfigError, ParseError, MCMLError
from services.importance_service import Instrumental
from services.model_core import ExponentialFamilyModel, build_model
from services.models import FitOptions


class ModelSpec(BaseModel):
    """Which exponential family to fit"""
    model_config = ConfigDict(extra='forbid')

    kind: Literal[MODEL_KIND_TOY, MODEL_KIND_AUTOLOGISTIC, MODEL_KIND_FINITE] = MODEL_KIND_TOY
    rows: Optional[int] = Field(None, ge=1, description="Lattice rows (autologistic)")
    cols: Optional[int] = Field(None, ge=1, description="Lattice columns (autologistic)")
    param_dim: Optional[int] = Field(None, ge=1, description="Statistic width (finite)")
    states: Optional[List[List[int]]] = Field(None, description="Support points (finite)")
    statistics: Optional[List[List[float]]] = Field(None, description="One statistic row per state (finite)")
    label: Optional[str] = None

    def build(self) -> ExponentialFamilyModel:
        return build_model(self.kind, rows=self.rows, cols=self.cols, states=self.states,
                           statistics=self.statistics, param_dim=self.param_dim, label=self.label)


class InstrumentalSpec(BaseModel):
    """Importance-sampling proposal; model_at without psi means h = p(.|theta_star), or p(.|0) without theta_star"""
    model_config = ConfigDict(extra='forbid')

    kind: Literal[INSTRUMENTAL_MODEL_AT, INSTRUMENTAL_UNIFORM] = INSTRUMENTAL_MODEL_AT
    psi: Optional[List[float]] = None
    covariate: Optional[List[float]] = None

    def build(self, fallback_psi: Optional[List[float]] = None) -> Instrumental:
        if self.kind == INSTRUMENTAL_UNIFORM:
            return Instrumental.uniform()
        psi = self.psi if self.psi is not None else fallback_psi
        if psi is None:
            raise ConfigError("model_at instrumental needs psi")
        return Instrumental.model_at(psi, self.covariate)


class FitSpec(BaseModel):
    """Newton options"""
    model_config = ConfigDict(extra='forbid')

    init: Optional[List[float]] = None
    grad_tol: float = Field(DEFAULT_GRAD_TOL, gt=0)
    max_iter: int = Field(DEFAULT_MAX_ITER, ge=1)
    step_halving_max: int = Field(DEFAULT_STEP_HALVING_MAX, ge=1)
    step_tol: float = Field(DEFAULT_STEP_TOL, gt=0)
    divergence_bound: float = Field(DEFAULT_DIVERGENCE_BOUND, gt=0)

    def to_fit_options(self) -> FitOptions:
        return FitOptions(
            init=None if self.init is None else np.asarray(self.init, dtype=float),
            grad_tol=self.grad_tol,
            max_iter=self.max_iter,
            step_halving_max=self.step_halving_max,
            step_tol=self.step_tol,
            divergence_bound=self.divergence_bound,
        )


class ExperimentConfig(BaseModel):
    """Everything a harness run needs; echoed verbatim into every report"""
    model_config = ConfigDict(extra='forbid', protected_namespaces=())

    model: ModelSpec = Field(default_factory=ModelSpec)
    theta_star: Optional[List[float]] = Field(None, min_length=1, description="True parameter; required by the replication experiments")
    n: int = Field(DEFAULT_N, ge=1)
    m: int = Field(DEFAULT_M, ge=1)
    replications: int = Field(DEFAULT_REPLICATIONS, ge=1)
    seed: int = Field(0, ge=0, lt=SEED_UPPER_BOUND)
    instrumental: InstrumentalSpec = Field(default_factory=InstrumentalSpec)
    covariates: Optional[List[List[float]]] = Field(None, description="Finite uniform law of X; null means the model default")
    level: float = Field(DEFAULT_LEVEL, gt=0, lt=1)
    psi_grid: Optional[List[List[float]]] = None
    n_grid: Optional[List[int]] = None
    workers: int = Field(DEFAULT_WORKERS, ge=1)
    record_timing: bool = False
    output: Optional[str] = None
    fit: FitSpec = Field(default_factory=FitSpec)

    @field_validator('n_grid')
    def n_grid_must_be_positive(cls, v):
        if v is not None and (not v or min(v) < 1):
            raise ValueError('n_grid must be a nonempty list of positive sizes')
        return v

    @field_validator('psi_grid')
    def psi_grid_must_be_nonempty(cls, v):
        if v is not None and not v:
            raise ValueError('psi_grid must not be empty')
        return v

    @model_validator(mode='after')
    def dimensions_must_match_model(self):
        try:
            p = self.to_model().param_dim
        except MCMLError as e:
            raise ValueError(str(e)) from e
        vectors = {'theta_star': self.theta_star, 'instrumental.psi': self.instrumental.psi,
                   'fit.init': self.fit.init}
        vectors.update({f'psi_grid[{i}]': psi for i, psi in enumerate(self.psi_grid or [])})
        for name, vector in vectors.items():
            if vector is not None and len(vector) != p:
                raise ValueError(f'{name} has {len(vector)} entries, model expects {p}')
        return self

    def to_model(self) -> ExponentialFamilyModel:
        return self.model.build()

    def to_instrumental(self, psi: Optional[List[float]] = None) -> Instrumental:
        """The configured h, or model_at(psi) at the configured covariate when psi is given."""
        if psi is not None:
            return Instrumental.model_at(psi, self.instrumental.covariate)
        fallback = self.theta_star if self.theta_star is not None else [0.0] * self.to_model().param_dim
        return self.instrumental.build(fallback_psi=fallback)

    def to_fit_options(self) -> FitOptions:
        return self.fit.to_fit_options()

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        """Read and validate a JSON config; ValidationError propagates for bad content."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ParseError(f"cannot read config {path}: {e}") from e
        return cls.model_validate_json(text)


__all__ = ['ModelSpec', 'InstrumentalSpec', 'FitSpec', 'ExperimentConfig']
