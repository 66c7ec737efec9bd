"""Report models written by the harness (JSON plus a CSV dump of the records)"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from constants.constants import (
    MAX_EXCLUDED_FRACTION,
    RECORDS_CSV_SUFFIX,
    REPORT_KIND_COMPARE_SCHEMES,
    REPORT_KIND_COVERAGE,
    REPORT_KIND_FIT,
    REPORT_KIND_PSI_SWEEP,
)
from exceptions import ParseError
from models.configs import ExperimentConfig

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'


def _sample_variance(values: np.ndarray) -> Optional[List[float]]:
    """Per-column variance with 1/k normalisation; None without rows."""
    if values.shape[0] == 0:
        return None
    return [float(v) for v in values.var(axis=0)]


def _excluded_summary(total: int, completed: int) -> tuple:
    excluded = total - completed
    fraction = excluded / total if total else 0.0
    return excluded, fraction, fraction > MAX_EXCLUDED_FRACTION


# ============================================================================
# FIT
# ============================================================================

class FitReport(BaseModel):
    """Single fit: estimate, standard errors and Wald intervals"""
    kind: Literal[REPORT_KIND_FIT] = REPORT_KIND_FIT
    model: str
    n: int
    m: Optional[int]
    seed: int
    instrumental: str
    theta_hat: List[float]
    standard_errors: List[float]
    ci_lower: List[float]
    ci_upper: List[float]
    level: float
    covariance: List[List[float]]
    converged: bool
    iterations: int
    final_grad_norm: float
    diagnostics: List[str] = Field(default_factory=list)


# ============================================================================
# COVERAGE
# ============================================================================

class CoverageRecord(BaseModel):
    """One replication of the coverage experiment"""
    replication: int
    status: Literal[STATUS_OK, STATUS_FAILED]
    theta_hat: Optional[List[float]] = None
    z: Optional[List[float]] = None
    hits: Optional[List[bool]] = None
    ellipsoid_hit: Optional[bool] = None
    iterations: Optional[int] = None
    error: Optional[str] = None
    seconds: Optional[float] = None


class CoverageAggregates(BaseModel):
    """Summary over the completed replications"""
    replications: int
    completed: int
    excluded: int
    excluded_fraction: float
    invalid: bool
    coverage: Optional[List[float]]
    ellipsoid_coverage: Optional[float]
    z_mean: Optional[List[float]]
    z_var: Optional[List[float]]
    mean_seconds: Optional[float] = None

    @classmethod
    def from_records(cls, records: List[CoverageRecord], param_dim: int) -> 'CoverageAggregates':
        ok = [r for r in records if r.status == STATUS_OK]
        excluded, fraction, invalid = _excluded_summary(len(records), len(ok))
        hits = np.array([r.hits for r in ok], dtype=float).reshape(-1, param_dim)
        z = np.array([r.z for r in ok], dtype=float).reshape(-1, param_dim)
        timed = [r.seconds for r in records if r.seconds is not None]
        return cls(
            replications=len(records),
            completed=len(ok),
            excluded=excluded,
            excluded_fraction=fraction,
            invalid=invalid,
            coverage=[float(c) for c in hits.mean(axis=0)] if ok else None,
            ellipsoid_coverage=float(np.mean([r.ellipsoid_hit for r in ok])) if ok else None,
            z_mean=[float(c) for c in z.mean(axis=0)] if ok else None,
            z_var=_sample_variance(z),
            mean_seconds=float(np.mean(timed)) if timed else None,
        )


class CoverageReport(BaseModel):
    """Coverage / normality experiment"""
    kind: Literal[REPORT_KIND_COVERAGE] = REPORT_KIND_COVERAGE
    config: ExperimentConfig
    records: List[CoverageRecord]
    aggregates: CoverageAggregates


# ============================================================================
# PSI SWEEP
# ============================================================================

class PsiSweepRecord(BaseModel):
    """psi - psi_hat^m for one (grid point, replication)"""
    psi_index: int
    replication: int
    status: Literal[STATUS_OK, STATUS_FAILED]
    error_vector: Optional[List[float]] = None
    error: Optional[str] = None
    seconds: Optional[float] = None


class PsiSweepPoint(BaseModel):
    """Empirical and theoretical MC-error variance at one psi"""
    psi: List[float]
    completed: int
    excluded: int
    empirical_variance: Optional[List[float]]
    theory_variance: List[float]
    relative_error: Optional[List[Optional[float]]]

    @classmethod
    def from_records(cls, psi: List[float], records: List[PsiSweepRecord], theory: List[float]) -> 'PsiSweepPoint':
        ok = [r for r in records if r.status == STATUS_OK]
        errors = np.array([r.error_vector for r in ok], dtype=float).reshape(-1, len(psi))
        empirical = _sample_variance(errors)
        return cls(
            psi=list(psi),
            completed=len(ok),
            excluded=len(records) - len(ok),
            empirical_variance=empirical,
            theory_variance=list(theory),
            relative_error=None if empirical is None else [
                float(e / t - 1.0) if t > 0 else None for e, t in zip(empirical, theory)
            ],
        )


class PsiSweepReport(BaseModel):
    """MC-error variance curve over the psi grid (first coordinate decides the minimum)"""
    kind: Literal[REPORT_KIND_PSI_SWEEP] = REPORT_KIND_PSI_SWEEP
    config: ExperimentConfig
    records: List[PsiSweepRecord]
    points: List[PsiSweepPoint]
    argmin_index: int
    excluded: int
    invalid: bool


# ============================================================================
# SCHEME COMPARISON
# ============================================================================

class SchemeComparisonRecord(BaseModel):
    """Both objective errors and the Cappe log-weight spread for one (n, replication)"""
    n_index: int
    n: int
    replication: int
    status: Literal[STATUS_OK, STATUS_FAILED]
    log_weight_variance: Optional[float] = None
    mcml_error: Optional[float] = None
    mean_log_norming_error: Optional[float] = Field(None, description="(1/n) sum_i log C_m(X_i) - log C(X_i) at theta_star")
    cappe_error: Optional[float] = None
    error: Optional[str] = None
    seconds: Optional[float] = None


class SchemeComparisonPoint(BaseModel):
    """Averages at one n"""
    n: int
    completed: int
    excluded: int
    mean_log_weight_variance: Optional[float]
    theory_log_weight_variance: float
    mcml_error_variance: Optional[float]
    cappe_error_variance: Optional[float]

    @classmethod
    def from_records(cls, n: int, records: List[SchemeComparisonRecord], theory: float) -> 'SchemeComparisonPoint':
        ok = [r for r in records if r.status == STATUS_OK]
        spread = np.array([r.log_weight_variance for r in ok], dtype=float)
        mcml = np.array([r.mcml_error for r in ok], dtype=float)
        cappe = np.array([r.cappe_error for r in ok], dtype=float)
        return cls(
            n=n,
            completed=len(ok),
            excluded=len(records) - len(ok),
            mean_log_weight_variance=float(spread.mean()) if ok else None,
            theory_log_weight_variance=float(theory),
            mcml_error_variance=float(mcml.var()) if ok else None,
            cappe_error_variance=float(cappe.var()) if ok else None,
        )


class SchemeComparisonReport(BaseModel):
    """Log-weight variance against n; slope fitted through the origin"""
    kind: Literal[REPORT_KIND_COMPARE_SCHEMES] = REPORT_KIND_COMPARE_SCHEMES
    config: ExperimentConfig
    records: List[SchemeComparisonRecord]
    points: List[SchemeComparisonPoint]
    slope: float
    max_linearity_deviation: float
    excluded: int
    invalid: bool


Report = Union[FitReport, CoverageReport, PsiSweepReport, SchemeComparisonReport]

_REPORT_TYPES = {
    REPORT_KIND_FIT: FitReport,
    REPORT_KIND_COVERAGE: CoverageReport,
    REPORT_KIND_PSI_SWEEP: PsiSweepReport,
    REPORT_KIND_COMPARE_SCHEMES: SchemeComparisonReport,
}


# ============================================================================
# PERSISTENCE
# ============================================================================

def records_frame(report: Report) -> pd.DataFrame:
    """Flatten per-replication records to one row each; list fields become name_j columns."""
    records = getattr(report, 'records', None) or []
    rows = []
    for record in records:
        row = {}
        for key, value in record.model_dump().items():
            if isinstance(value, list):
                for j, item in enumerate(value):
                    row[f"{key}_{j}"] = item
            else:
                row[key] = value
        rows.append(row)
    return pd.DataFrame(rows)


def records_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + RECORDS_CSV_SUFFIX)


def write_report(report: Report, path: Union[str, Path]) -> Path:
    """Write the JSON report and, for replication reports, the plot-ready records CSV."""
    path = Path(path)
    path.write_text(report.model_dump_json(indent=2))
    if getattr(report, 'records', None):
        records_frame(report).to_csv(records_path(path), index=False)
    logger.info(f"💾 Wrote {report.kind} report to {path}")
    return path


def load_report(path: Union[str, Path]) -> Report:
    """Re-read a JSON report of any kind."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read report {path}: {e}") from e
    report_type = _REPORT_TYPES.get(payload.get('kind'))
    if report_type is None:
        raise ParseError(f"unknown report kind {payload.get('kind')!r} in {path}")
    return report_type.model_validate(payload)
