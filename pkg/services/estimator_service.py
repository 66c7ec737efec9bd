"""Safeguarded Newton maximisation of the (Monte Carlo) log-likelihood."""

import logging
from dataclasses import replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from constants.constants import VALUE_DECREASE_SLACK
from exceptions import (
    DegenerateDataError,
    NoOracleError,
    NonConvergenceError,
    NumericalUnderflowError,
)
from services.asymptotics_service import AsymptoticsCalculator
from services.likelihood_service import LikelihoodCalculator
from services.model_core import ExponentialFamilyModel, check_theta
from services.models import (
    Dataset,
    FitOptions,
    FitResult,
    ImportanceSample,
    ObjectiveEval,
    SandwichParts,
    TraceEntry,
)
from util import sup_norm

logger = logging.getLogger(__name__)

NEWTON = 'newton'
GRADIENT = 'gradient'
POLISH = 'polish'
START = 'start'

Objective = Callable[[np.ndarray], ObjectiveEval]


class NewtonMaximizer:
    """
    Newton ascent with step halving on a concave objective.

    Falls back to gradient ascent (also with step halving) whenever -H is not
    positive definite or the Newton direction finds no acceptable step.
    """

    def __init__(self, options: Optional[FitOptions] = None):
        self.options = options or FitOptions()

    def maximize(self, objective: Objective, param_dim: int, label: str = 'objective') -> Tuple[np.ndarray, ObjectiveEval, bool, int, List[TraceEntry]]:
        """
        Run the iterations from options.init (zero vector by default).

        Args:
            objective: theta -> ObjectiveEval of the 1/n-scaled objective
            param_dim: length of theta
            label: name used in log messages

        Returns:
            Tuple of (theta, evaluation at theta, converged, iterations, trace)

        Raises:
            DegenerateDataError: ||theta||_inf left the divergence bound
            NonConvergenceError: max_iter reached or no acceptable step exists
        """
        opts = self.options
        theta = np.zeros(param_dim) if opts.init is None else np.asarray(opts.init, dtype=float).copy()
        current = objective(theta)
        trace = [TraceEntry(theta=theta.copy(), value=current.value,
                            grad_norm=sup_norm(current.score), step=0.0, direction=START)]

        for iteration in range(1, opts.max_iter + 1):
            grad_norm = sup_norm(current.score)
            direction = self._newton_direction(current)
            kind = NEWTON

            if direction is None:
                if grad_norm <= opts.grad_tol:
                    logger.info(f"✅ {label}: stationary point with a non-concave Hessian after {iteration - 1} iterations")
                    return theta, current, True, iteration - 1, trace
                logger.warning(f"{label}: -H not positive definite at iteration {iteration}, taking a gradient step")
                direction, kind = current.score.copy(), GRADIENT
            elif grad_norm <= opts.grad_tol and sup_norm(direction) <= opts.step_tol:
                theta, current = self._polish(objective, theta, current, direction, trace)
                logger.info(f"✅ {label}: converged in {iteration - 1} iterations, |score| = {sup_norm(current.score):.3e}")
                return theta, current, True, iteration - 1, trace

            accepted = self._line_search(objective, theta, current, direction)
            if accepted is None and kind == NEWTON:
                logger.warning(f"{label}: Newton step rejected at iteration {iteration}, trying the gradient")
                kind = GRADIENT
                accepted = self._line_search(objective, theta, current, current.score.copy())
            if accepted is None:
                if grad_norm <= opts.grad_tol:
                    logger.info(f"✅ {label}: no further ascent possible, |score| = {grad_norm:.3e}")
                    return theta, current, True, iteration - 1, trace
                raise NonConvergenceError(
                    f"{label}: step halving failed after {opts.step_halving_max} halvings at iteration {iteration}",
                    trace,
                )

            theta, current, step = accepted
            trace.append(TraceEntry(theta=theta.copy(), value=current.value,
                                    grad_norm=sup_norm(current.score), step=step, direction=kind))
            logger.debug(f"{label} iter {iteration}: value={current.value:.10g} "
                         f"|score|={trace[-1].grad_norm:.3e} step={step:g} ({kind})")

            if sup_norm(theta) > opts.divergence_bound:
                raise DegenerateDataError(
                    f"{label}: ||theta||_inf = {sup_norm(theta):.3g} exceeds {opts.divergence_bound:g}; "
                    "the maximiser is at infinity (degenerate data)",
                    trace,
                )

        # the last accepted step may itself have reached the optimum
        direction = self._newton_direction(current)
        if (direction is not None and sup_norm(current.score) <= opts.grad_tol
                and sup_norm(direction) <= opts.step_tol):
            theta, current = self._polish(objective, theta, current, direction, trace)
            logger.info(f"✅ {label}: converged in {opts.max_iter} iterations, |score| = {sup_norm(current.score):.3e}")
            return theta, current, True, opts.max_iter, trace
        raise NonConvergenceError(f"{label}: no convergence within {opts.max_iter} iterations", trace)

    @staticmethod
    def _newton_direction(current: ObjectiveEval) -> Optional[np.ndarray]:
        """Solve (-H) d = g; None when -H is not positive definite."""
        try:
            factor = cho_factor(-current.hess)
        except LinAlgError:
            return None
        direction = cho_solve(factor, current.score)
        if not np.all(np.isfinite(direction)):
            return None
        return direction

    def _line_search(self, objective: Objective, theta: np.ndarray, current: ObjectiveEval,
                     direction: np.ndarray) -> Optional[Tuple[np.ndarray, ObjectiveEval, float]]:
        """Halve the step until the value does not decrease (up to a relative slack)."""
        floor = current.value - VALUE_DECREASE_SLACK * max(1.0, abs(current.value))
        step = 1.0
        for _ in range(self.options.step_halving_max + 1):
            candidate = theta + step * direction
            try:
                evaluation = objective(candidate)
            except NumericalUnderflowError:
                evaluation = None
            if evaluation is not None and np.isfinite(evaluation.value) and evaluation.value >= floor:
                return candidate, evaluation, step
            step *= 0.5
        return None

    def _polish(self, objective: Objective, theta: np.ndarray, current: ObjectiveEval,
                direction: np.ndarray, trace: List[TraceEntry]) -> Tuple[np.ndarray, ObjectiveEval]:
        """One last full Newton step, kept only if it stays within grad_tol."""
        candidate = theta + direction
        try:
            evaluation = objective(candidate)
        except NumericalUnderflowError:
            return theta, current
        floor = current.value - VALUE_DECREASE_SLACK * max(1.0, abs(current.value))
        if evaluation.value >= floor and sup_norm(evaluation.score) <= self.options.grad_tol:
            trace.append(TraceEntry(theta=candidate.copy(), value=evaluation.value,
                                    grad_norm=sup_norm(evaluation.score), step=1.0, direction=POLISH))
            return candidate, evaluation
        return theta, current


def _fit(objective: Objective, model: ExponentialFamilyModel, opts: Optional[FitOptions],
         n: int, m: Optional[int], label: str) -> FitResult:
    opts = opts or FitOptions()
    if opts.init is not None:
        opts = replace(opts, init=check_theta(model, opts.init))
    theta, current, converged, iterations, trace = NewtonMaximizer(opts).maximize(
        objective, model.param_dim, label
    )
    return FitResult(
        theta_hat=theta,
        converged=converged,
        iterations=iterations,
        final_grad_norm=sup_norm(current.score),
        value=current.value,
        trace=trace,
        n=n,
        m=m,
    )


def fit_mcml(data: Dataset, sample: ImportanceSample, model: ExponentialFamilyModel,
             opts: Optional[FitOptions] = None) -> FitResult:
    """Maximise the 1/n-scaled Monte Carlo log-likelihood; returns theta_hat_n^m."""
    likelihood = LikelihoodCalculator(model)
    objective = lambda theta: likelihood.mc_loglik(data, sample, theta).scaled()
    return _fit(objective, model, opts, data.n, sample.m, f"{model.label} MCML")


def fit_exact(data: Dataset, model: ExponentialFamilyModel, opts: Optional[FitOptions] = None) -> FitResult:
    """Maximise the exact log-likelihood through the enumeration oracle; returns theta_hat_n."""
    if model.support is None:
        raise NoOracleError(f"{model.label}: exact fit needs an enumerable support")
    likelihood = LikelihoodCalculator(model)
    objective = lambda theta: likelihood.exact_loglik(data, theta).scaled()
    return _fit(objective, model, opts, data.n, None, f"{model.label} exact ML")


def attach_sandwich(fit: FitResult, parts: SandwichParts) -> FitResult:
    """Store the plug-in parts, sandwich covariance and D_hat diagnostics on the fit."""
    fit.sandwich = parts
    fit.covariance = AsymptoticsCalculator.sandwich_cov(parts)
    for message in parts.diagnostics():
        logger.warning(message)
        fit.diagnostics.append(message)
    return fit
