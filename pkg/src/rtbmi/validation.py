"""Input checks shared by the estimators and the functional API."""

from __future__ import annotations

import numpy as np

__all__ = [
    "NonMonotoneError",
    "check_trial_matrix",
    "check_groups",
    "observation_mask",
    "is_monotone",
]


class NonMonotoneError(ValueError):
    """Missingness pattern is not monotone, or baseline is missing."""


def observation_mask(values: np.ndarray) -> np.ndarray:
    return ~np.isnan(values)


def is_monotone(mask: np.ndarray) -> bool:
    """True when every row is observed on a prefix of its visits."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[1] < 2:
        return True
    return not np.any(~mask[:, :-1] & mask[:, 1:])


def check_trial_matrix(X, *, min_visits: int = 2) -> np.ndarray:
    """Validate an ``n x (K+1)`` outcome matrix with NaN for missing cells.

    Baseline (column 0) must be fully observed and the pattern monotone.
    Returns a float copy.
    """
    X = np.array(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D outcome matrix, got {X.ndim}-D")
    if X.shape[1] < min_visits:
        raise ValueError(f"need at least {min_visits} visit columns, got {X.shape[1]}")
    if X.shape[0] == 0:
        raise ValueError("outcome matrix has no rows")
    if np.isinf(X).any():
        raise ValueError("outcome matrix contains infinite values")
    mask = observation_mask(X)
    if not mask[:, 0].all():
        raise NonMonotoneError("baseline column must be fully observed")
    if not is_monotone(mask):
        rows = np.flatnonzero(np.any(~mask[:, :-1] & mask[:, 1:], axis=1))
        raise NonMonotoneError(
            f"non-monotone missingness in {rows.size} row(s), first at row {rows[0]}"
        )
    return X


def check_groups(groups, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, codes)`` for a group vector of length ``n``.

    ``groups=None`` means a single group.  Labels keep first-appearance order
    so the first arm seen is the reference arm.
    """
    if groups is None:
        return np.array(["0"], dtype=object), np.zeros(n, dtype=int)
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ValueError(f"groups must have shape ({n},), got {groups.shape}")
    _, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    labels = groups[np.sort(first)]
    return labels, rank[inverse.ravel()]
