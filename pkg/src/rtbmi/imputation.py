"""Proper multiple imputation for monotone missing data.

The joint normal likelihood of a monotone pattern factors into one linear
regression per visit: visit ``k`` on ``(1, Y_0, ..., Y_{k-1})`` among the
subjects still observed at ``k``.  Each imputation draws the regression
parameters from their posterior under the usual noninformative prior and
then fills visits in order, so later visits condition on earlier imputed
values.  This matches the monotone-regression method of PROC MI and mice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .rng import check_random_state
from .validation import check_trial_matrix

__all__ = [
    "ImputationError",
    "DegenerateDataError",
    "SingularDesignError",
    "VisitRegression",
    "CompletedDataset",
    "fit_visit_regression",
    "fit_monotone_regressions",
    "draw_posterior",
    "impute_stack",
    "impute_once",
    "impute_m",
    "implied_moments",
    "MonotoneRegressionImputer",
]

MIN_EXTRA_CASES = 3


class ImputationError(ValueError):
    """Base class for data problems that stop an imputation."""


class DegenerateDataError(ImputationError):
    """Too few complete cases, or a perfect fit with zero residual variance."""


class SingularDesignError(ImputationError, np.linalg.LinAlgError):
    """Design matrix does not have full column rank."""


@dataclass(frozen=True)
class VisitRegression:
    """OLS fit of one visit on the intercept and every earlier visit."""

    visit: int
    coeffs: np.ndarray
    resid_var: float
    n_used: int
    xtx_inv: np.ndarray

    @property
    def n_coeffs(self) -> int:
        return self.coeffs.size

    @property
    def df(self) -> int:
        return self.n_used - self.n_coeffs


@dataclass(frozen=True)
class CompletedDataset:
    """One imputed copy of a trial.

    ``arms[i]`` holds the completed matrix for arm ``labels[i]``; cells where
    ``source_masks[i]`` is true are untouched source values.  Methods that only
    impute the final visit may leave intermediate visits missing.
    """

    labels: tuple[str, ...]
    arms: tuple[np.ndarray, ...]
    source_masks: tuple[np.ndarray, ...]
    method: str
    m: int

    @property
    def K(self) -> int:
        return self.arms[0].shape[1] - 1

    def arm(self, label: str) -> np.ndarray:
        return self.arms[self.labels.index(label)]

    def final_visit(self, label: str) -> np.ndarray:
        return self.arm(label)[:, -1]


def fit_visit_regression(
    values: np.ndarray, k: int, min_extra: int = MIN_EXTRA_CASES
) -> VisitRegression:
    """Regress visit ``k`` on ``(1, Y_0..Y_{k-1})`` over subjects observed at ``k``.

    ``min_extra`` is the number of complete cases required beyond the
    coefficient count.
    """
    values = np.asarray(values, dtype=float)
    if not 1 <= k < values.shape[1]:
        raise ValueError(f"visit {k} out of range for {values.shape[1]} columns")
    rows = ~np.isnan(values[:, k])
    p = k + 1
    n_used = int(rows.sum())
    if n_used < p + min_extra:
        raise DegenerateDataError(
            f"visit {k}: {n_used} complete cases, need at least {p + min_extra}"
        )
    design = np.empty((n_used, p))
    design[:, 0] = 1.0
    design[:, 1:] = values[rows, :k]
    if np.isnan(design).any():
        raise ImputationError(f"visit {k}: history is missing for observed subjects")
    y = values[rows, k]
    coeffs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < p:
        raise SingularDesignError(f"visit {k}: design has rank {rank} < {p}")
    resid = y - design @ coeffs
    resid_var = float(resid @ resid) / (n_used - p)
    if resid_var <= 1e-12 * (float(y @ y) / n_used + np.finfo(float).tiny):
        raise DegenerateDataError(f"visit {k}: zero residual variance")
    xtx_inv = np.linalg.inv(design.T @ design)
    return VisitRegression(k, coeffs, resid_var, n_used, 0.5 * (xtx_inv + xtx_inv.T))


def fit_monotone_regressions(
    values: np.ndarray, visits=None, min_extra: int = MIN_EXTRA_CASES
) -> dict[int, VisitRegression]:
    """Fit the per-visit regressions; by default for every postbaseline visit."""
    if visits is None:
        visits = range(1, values.shape[1])
    return {k: fit_visit_regression(values, k, min_extra) for k in visits}


def draw_posterior(fit: VisitRegression, rng: np.random.Generator, size: int | None = None):
    """Posterior draw of ``(coeffs, resid_var)`` under the flat prior.

    ``resid_var* = resid_var * df / chi2(df)`` and
    ``coeffs* ~ N(coeffs, resid_var* * xtx_inv)`` with ``df = n_used - p``.
    With ``size`` the draws are stacked along a leading axis.
    """
    shape = () if size is None else (size,)
    s2 = fit.resid_var * fit.df / rng.chisquare(fit.df, size=shape)
    z = rng.standard_normal(shape + (fit.n_coeffs,))
    L = np.linalg.cholesky(fit.xtx_inv)
    coeffs = fit.coeffs + np.sqrt(s2)[..., None] * (z @ L.T)
    return coeffs, s2


def impute_stack(
    values: np.ndarray,
    n_imputations: int,
    rng: np.random.Generator,
    regressions: dict[int, VisitRegression] | None = None,
) -> np.ndarray:
    """Return an ``(M, n, K+1)`` stack of completed copies of one arm.

    Visits with nothing missing are left alone.  When ``regressions`` is
    omitted they are fitted on ``values``.
    """
    values = check_trial_matrix(values)
    n, d = values.shape
    missing = np.isnan(values)
    out = np.repeat(values[None], n_imputations, axis=0)
    for k in range(1, d):
        miss = missing[:, k]
        if not miss.any():
            continue
        fit = regressions[k] if regressions is not None else fit_visit_regression(values, k)
        beta, s2 = draw_posterior(fit, rng, n_imputations)
        hist = out[:, miss, :k]
        pred = beta[:, :1] + np.einsum("mjk,mk->mj", hist, beta[:, 1:])
        noise = rng.standard_normal((n_imputations, int(miss.sum())))
        out[:, miss, k] = pred + np.sqrt(s2)[:, None] * noise
    return out


def _as_trial(dataset):
    from .datagen import ArmData, TrialDataset

    if isinstance(dataset, ArmData):
        return TrialDataset((dataset,))
    return dataset


def impute_once(dataset, rng: np.random.Generator) -> CompletedDataset:
    """Single proper imputation of every arm (each arm modelled separately)."""
    return impute_m(dataset, 1, rng, _min_m=1)[0]


def impute_m(dataset, M: int, rng: np.random.Generator, _min_m: int = 2) -> list[CompletedDataset]:
    """``M`` proper imputations; each arm is imputed from its own model."""
    if M < _min_m:
        raise ValueError(f"need at least {_min_m} imputations, got {M}")
    trial = _as_trial(dataset)
    stacks = [impute_stack(arm.values, M, rng) for arm in trial.arms]
    return stacks_to_completed(trial, stacks, "mi")


def stacks_to_completed(trial, stacks, method: str) -> list[CompletedDataset]:
    labels = tuple(trial.labels)
    masks = tuple(arm.mask for arm in trial.arms)
    M = stacks[0].shape[0]
    return [
        CompletedDataset(labels, tuple(s[m] for s in stacks), masks, method, m + 1)
        for m in range(M)
    ]


def implied_moments(values: np.ndarray, regressions: dict[int, VisitRegression] | None = None):
    """Maximum-likelihood mean and covariance implied by the visit regressions.

    For a fully observed matrix these equal the sample mean and the sample
    covariance with divisor ``n``.
    """
    values = check_trial_matrix(values)
    if regressions is None:
        regressions = fit_monotone_regressions(values)
    d = values.shape[1]
    x0 = values[:, 0]
    mean = np.empty(d)
    cov = np.empty((d, d))
    mean[0] = x0.mean()
    cov[0, 0] = x0.var()
    for k in range(1, d):
        fit = regressions[k]
        b = fit.coeffs[1:]
        s2_ml = fit.resid_var * fit.df / fit.n_used
        mean[k] = fit.coeffs[0] + b @ mean[:k]
        cross = cov[:k, :k] @ b
        cov[k, :k] = cross
        cov[:k, k] = cross
        cov[k, k] = b @ cross + s2_ml
    return mean, cov


class MonotoneRegressionImputer(TransformerMixin, BaseEstimator):
    """Sequential-regression multiple imputer for monotone outcome matrices.

    ``fit`` estimates one regression per visit; every call to ``transform``
    returns a fresh completed matrix drawn with posterior parameter
    uncertainty, in the spirit of ``IterativeImputer(sample_posterior=True)``.

    Parameters
    ----------
    min_extra_cases : int
        Complete cases required per visit beyond the coefficient count.
    random_state : int, Generator or None
    """

    def __init__(self, min_extra_cases=MIN_EXTRA_CASES, random_state=None):
        self.min_extra_cases = min_extra_cases
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_trial_matrix(X)
        self.n_features_in_ = X.shape[1]
        self.regressions_ = fit_monotone_regressions(X, min_extra=self.min_extra_cases)
        self.mean_, self.covariance_ = implied_moments(X, self.regressions_)
        self._rng = check_random_state(self.random_state)
        return self

    def _check_X(self, X):
        check_is_fitted(self, "regressions_")
        X = check_trial_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, fitted on {self.n_features_in_}")
        return X

    def transform(self, X):
        return self.sample(X, 1)[0]

    def sample(self, X, n_imputations: int) -> np.ndarray:
        """``(n_imputations, n, K+1)`` completed copies of ``X``."""
        X = self._check_X(X)
        return impute_stack(X, n_imputations, self._rng, self.regressions_)
