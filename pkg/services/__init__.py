"""Services package for MCML estimation, asymptotics and the experiment harness."""

from .model_core import (
    ExponentialFamilyModel,
    ToyBernoulliModel,
    AutologisticModel,
    FiniteFamilyModel,
    build_model,
)
from .importance_service import ImportanceSampler, Instrumental, draw_instrumental, draw_joint_instrumental, mc_norming
from .likelihood_service import LikelihoodCalculator, mc_loglik, exact_loglik, cappe_loglik
from .asymptotics_service import (
    AsymptoticsCalculator,
    build_sandwich_parts,
    sandwich_cov,
    standardize,
    confidence_region,
)
from .estimator_service import NewtonMaximizer, fit_mcml, fit_exact, attach_sandwich
from .dataset_loader import load_dataset, save_dataset

__all__ = [
    "ExponentialFamilyModel",
    "ToyBernoulliModel",
    "AutologisticModel",
    "FiniteFamilyModel",
    "build_model",
    "ImportanceSampler",
    "Instrumental",
    "draw_instrumental",
    "draw_joint_instrumental",
    "mc_norming",
    "LikelihoodCalculator",
    "mc_loglik",
    "exact_loglik",
    "cappe_loglik",
    "AsymptoticsCalculator",
    "build_sandwich_parts",
    "sandwich_cov",
    "standardize",
    "confidence_region",
    "NewtonMaximizer",
    "fit_mcml",
    "fit_exact",
    "attach_sandwich",
    "load_dataset",
    "save_dataset",
]
