# Models package: experiment configs and harness reports
from .configs import ModelSpec, InstrumentalSpec, FitSpec, ExperimentConfig
from .reports import (
    FitReport,
    CoverageRecord,
    CoverageAggregates,
    CoverageReport,
    PsiSweepRecord,
    PsiSweepPoint,
    PsiSweepReport,
    SchemeComparisonRecord,
    SchemeComparisonPoint,
    SchemeComparisonReport,
    load_report,
    write_report,
)

__all__ = [
    "ModelSpec",
    "InstrumentalSpec",
    "FitSpec",
    "ExperimentConfig",
    "FitReport",
    "CoverageRecord",
    "CoverageAggregates",
    "CoverageReport",
    "PsiSweepRecord",
    "PsiSweepPoint",
    "PsiSweepReport",
    "SchemeComparisonRecord",
    "SchemeComparisonPoint",
    "SchemeComparisonReport",
    "load_report",
    "write_report",
]
