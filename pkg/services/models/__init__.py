"""Models for MCML services."""

from .mcml_models import (
    Dataset,
    NormingTriple,
    ImportanceSample,
    JointImportanceSample,
    ObjectiveEval,
    FitOptions,
    TraceEntry,
    FitResult,
    SandwichParts,
    PhiValue,
    ConfidenceRegion,
)

__all__ = [
    'Dataset',
    'NormingTriple',
    'ImportanceSample',
    'JointImportanceSample',
    'ObjectiveEval',
    'FitOptions',
    'TraceEntry',
    'FitResult',
    'SandwichParts',
    'PhiValue',
    'ConfidenceRegion',
]
