"""
Shared numeric utilities for the MCML toolkit.
Small helpers used across the services; nothing here knows about a specific model.
"""

import logging
from typing import Tuple

import numpy as np

from exceptions import NumericalUnderflowError

logger = logging.getLogger(__name__)


# =============================================================================
# WEIGHTED MOMENTS (max-shifted log weights)
# =============================================================================

def weighted_moments(
    log_weights: np.ndarray,
    stats: np.ndarray,
    normaliser: float,
) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """
    Reduce log weights and statistic rows to (log_value, anchor, offset, covariance).

    log_value = log( sum_k exp(log_weights[k]) / normaliser ), computed after
    shifting by the largest log weight. The weighted mean of the rows is
    anchor + offset, where anchor is the row carrying the largest weight and
    offset = sum_k p_k (S_k - anchor). The split keeps tiny offsets exact
    when one row dominates the weights.

    Args:
        log_weights: shape (k,)
        stats: shape (k, p)
        normaliser: m for a Monte Carlo average, 1 for an exact sum

    Returns:
        Tuple of (log_value, anchor (p,), offset (p,), covariance (p, p))
    """
    log_weights = np.asarray(log_weights, dtype=float)
    top = int(np.argmax(log_weights))
    shift = log_weights[top]
    if not np.isfinite(shift):
        raise NumericalUnderflowError(f"Importance weights are not finite (max log weight {shift})")

    weights = np.exp(log_weights - shift)
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise NumericalUnderflowError("All importance weights underflowed after the max shift")

    probs = weights / total
    anchor = np.array(stats[top], dtype=float)
    relative = stats - anchor
    offset = probs @ relative
    centred = relative - offset
    covariance = (centred * probs[:, None]).T @ centred
    log_value = shift + np.log(total) - np.log(normaliser)
    return float(log_value), anchor, offset, symmetrize(covariance)


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose."""
    matrix = np.asarray(matrix, dtype=float)
    return 0.5 * (matrix + matrix.T)


def empirical_covariance(rows: np.ndarray) -> np.ndarray:
    """Covariance of the rows with 1/k normalisation."""
    rows = np.asarray(rows, dtype=float)
    centred = rows - rows.mean(axis=0)
    return symmetrize(centred.T @ centred / rows.shape[0])


def as_rows(values, n: int) -> np.ndarray:
    """View covariates as (n, l) floats; empty input gives l = 0."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        return values
    if values.size == 0:
        return np.zeros((n, 0))
    return values.reshape(n, -1)


def sup_norm(vector: np.ndarray) -> float:
    """Largest absolute entry."""
    vector = np.asarray(vector, dtype=float)
    return float(np.max(np.abs(vector))) if vector.size else 0.0


# =============================================================================
# COVARIATE GROUPING
# =============================================================================

def group_covariates(covariates: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Collapse repeated covariate rows.

    Returns:
        (unique rows (G, l), inverse index (n,), counts (G,)); rows keep
        first-seen order so reductions over groups are reproducible.
    """
    covariates = np.asarray(covariates, dtype=float)
    n = covariates.shape[0]
    covariates = as_rows(covariates, n)
    if covariates.shape[1] == 0:
        return covariates[:1], np.zeros(n, dtype=np.intp), np.array([n])

    _, first, inverse, counts = np.unique(
        covariates, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    # np.unique sorts lexicographically; re-label groups by first appearance
    order = np.argsort(first, kind='stable')
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.size)
    return covariates[first[order]], relabel[inverse], counts[order]


# =============================================================================
# RANDOM STREAMS
# =============================================================================

def replication_stream(seed: int, replication: int, role: int, *extra: int) -> np.random.Generator:
    """
    Counter-based generator for one (seed, replication, role) key.

    Philox streams keyed through SeedSequence spawn keys do not depend on the
    order in which other keys are requested, so replication r sees the same
    draws whatever R or the worker count is.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replication), int(role), *map(int, extra)))
    return np.random.Generator(np.random.Philox(sequence))


def seeded_stream(seed: int) -> np.random.Generator:
    """Single Philox stream for library-level calls outside the harness."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
