"""Return-to-baseline imputation methods.

``nim-mean``     proper MI under MAR, then the final-visit imputations of each
                 arm are shifted so that the arm's completed mean moves to the
                 pooled baseline mean.
``nim-meanvar``  as above, additionally rescaled to the pooled baseline SD.
``tim``          baseline plus independent noise with the completer SD of
                 the change from baseline.
``quan``         baseline plus noise with variance twice the mean squared
                 first-visit change.
``bocf``         baseline observation carried forward.
``direct-ml``    no imputation; retention fraction times the ML mean change.

The array-level helpers (``*_stack``) work on ``(M, n, K+1)`` stacks so that
all imputations of one arm are produced in a single vectorized pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .datagen import TrialDataset
from .imputation import (
    CompletedDataset,
    DegenerateDataError,
    fit_monotone_regressions,
    impute_stack,
    implied_moments,
    stacks_to_completed,
)
from .rng import check_random_state
from .validation import check_groups, check_trial_matrix

__all__ = [
    "METHODS",
    "IMPUTATION_METHODS",
    "RtbShiftRecord",
    "rtb_mean_shift",
    "rtb_mean_var_shift",
    "tim_impute",
    "quan_impute",
    "bocf",
    "nim_impute",
    "impute",
    "impute_stacks",
    "direct_ml_estimate",
    "DirectMLResult",
    "ReturnToBaselineImputer",
    "DirectMLEstimator",
]

IMPUTATION_METHODS = ("nim-mean", "nim-meanvar", "tim", "quan", "bocf")
METHODS = IMPUTATION_METHODS + ("direct-ml",)


@dataclass(frozen=True)
class RtbShiftRecord:
    arm: str
    m: int
    mu_hat_y: float
    xbar_pooled: float
    s_x: float
    s_y: float


# -- array-level transforms -------------------------------------------------


def mean_shift_stack(stack: np.ndarray, imputed: np.ndarray, xbar: float) -> np.ndarray:
    """Shift final-visit imputations by ``xbar - mean(final visit)`` per copy."""
    if stack.shape[1] == 0:
        raise ValueError("cannot shift an empty arm")
    final = stack[..., -1]
    mu = final.mean(axis=-1, keepdims=True)
    out = stack.copy()
    out[..., imputed, -1] = final[..., imputed] - mu + xbar
    return out


def mean_var_shift_stack(
    stack: np.ndarray, imputed: np.ndarray, xbar: float, s_x: float
) -> np.ndarray:
    """Like :func:`mean_shift_stack` but scale deviations by ``s_x / s_y``."""
    if stack.shape[1] < 2:
        raise ValueError("need at least two subjects to rescale")
    final = stack[..., -1]
    mu = final.mean(axis=-1, keepdims=True)
    s_y = final.std(axis=-1, ddof=1, keepdims=True)
    if np.any(s_y <= 0):
        raise DegenerateDataError("completed final visit has zero standard deviation")
    out = stack.copy()
    out[..., imputed, -1] = s_x / s_y * (final[..., imputed] - mu) + xbar
    return out


def tim_tau(values: np.ndarray) -> float:
    """Completer SD of the change from baseline to the final visit."""
    obs = ~np.isnan(values[:, -1])
    if obs.sum() < 2:
        raise DegenerateDataError(f"TIM needs two completers, found {int(obs.sum())}")
    return float(np.std(values[obs, -1] - values[obs, 0], ddof=1))


def quan_tau2(values: np.ndarray) -> float:
    """Mean squared difference between baseline and the first visit."""
    obs = ~np.isnan(values[:, 1])
    if obs.sum() < 2:
        raise DegenerateDataError(
            f"Quan's method needs two observed first visits, found {int(obs.sum())}"
        )
    diff = values[obs, 1] - values[obs, 0]
    return float(np.mean(diff**2))


def noise_stack(values: np.ndarray, M: int, rng: np.random.Generator, sd: float) -> np.ndarray:
    """Final-visit gaps filled by ``baseline + sd * N(0, 1)``; other gaps kept."""
    miss = np.isnan(values[:, -1])
    out = np.repeat(values[None], M, axis=0)
    noise = rng.standard_normal((M, int(miss.sum())))
    out[:, miss, -1] = values[miss, 0] + sd * noise
    return out


def nim_stack(
    values: np.ndarray,
    M: int,
    rng: np.random.Generator,
    xbar: float,
    s_x: float | None = None,
    regressions=None,
) -> np.ndarray:
    stack = impute_stack(values, M, rng, regressions)
    imputed = np.isnan(values[:, -1])
    if s_x is None:
        return mean_shift_stack(stack, imputed, xbar)
    return mean_var_shift_stack(stack, imputed, xbar, s_x)


def baseline_stats(trial: TrialDataset, pooled: bool = True) -> list[tuple[float, float]]:
    """``(mean, sd)`` of baseline used as the return target for each arm."""
    if pooled:
        x = np.concatenate([a.values[:, 0] for a in trial.arms])
        stats = (float(x.mean()), float(x.std(ddof=1)))
        return [stats] * len(trial.arms)
    return [(float(a.values[:, 0].mean()), float(a.values[:, 0].std(ddof=1))) for a in trial.arms]


def impute_stacks(
    trial: TrialDataset,
    method: str,
    M: int,
    rng: np.random.Generator,
    pooled_baseline: bool = True,
) -> list[np.ndarray]:
    """One ``(M, n_i, K+1)`` stack per arm (``M = 1`` for ``bocf``)."""
    if method not in IMPUTATION_METHODS:
        raise ValueError(f"unknown imputation method {method!r}; choose from {IMPUTATION_METHODS}")
    if method == "bocf":
        return [noise_stack(a.values, 1, rng, 0.0) for a in trial.arms]
    if method == "tim":
        return [noise_stack(a.values, M, rng, tim_tau(a.values)) for a in trial.arms]
    if method == "quan":
        return [noise_stack(a.values, M, rng, np.sqrt(2 * quan_tau2(a.values))) for a in trial.arms]
    targets = baseline_stats(trial, pooled_baseline)
    return [
        nim_stack(a.values, M, rng, xbar, s_x if method == "nim-meanvar" else None)
        for a, (xbar, s_x) in zip(trial.arms, targets)
    ]


# -- CompletedDataset-level API ---------------------------------------------


def _apply(completed: CompletedDataset, fn, tag: str) -> CompletedDataset:
    arms = tuple(
        fn(values[None], ~mask[:, -1])[0] for values, mask in zip(completed.arms, completed.source_masks)
    )
    return CompletedDataset(completed.labels, arms, completed.source_masks, tag, completed.m)


def rtb_mean_shift(completed: CompletedDataset, baseline_pooled_mean: float) -> CompletedDataset:
    """Move each arm's final-visit imputations so the arm mean becomes
    ``baseline_pooled_mean``; observed values are untouched."""
    return _apply(
        completed,
        lambda s, imp: mean_shift_stack(s, imp, baseline_pooled_mean),
        "nim-mean",
    )


def rtb_mean_var_shift(
    completed: CompletedDataset, baseline_pooled_mean: float, s_x: float
) -> CompletedDataset:
    """Mean shift plus rescaling of imputed deviations by ``s_x / S_y``,
    where ``S_y`` is the arm's completed final-visit SD."""
    return _apply(
        completed,
        lambda s, imp: mean_var_shift_stack(s, imp, baseline_pooled_mean, s_x),
        "nim-meanvar",
    )


def shift_records(completed: CompletedDataset, baseline_pooled_mean: float, s_x: float):
    """Per-arm quantities behind the shift, for inspection."""
    out = []
    for label, values in zip(completed.labels, completed.arms):
        final = values[:, -1]
        out.append(
            RtbShiftRecord(label, completed.m, float(final.mean()), baseline_pooled_mean,
                           s_x, float(final.std(ddof=1)))
        )
    return out


def nim_impute(
    dataset: TrialDataset,
    rng: np.random.Generator,
    M: int,
    variance: bool = False,
    pooled_baseline: bool = True,
) -> list[CompletedDataset]:
    method = "nim-meanvar" if variance else "nim-mean"
    return impute(dataset, method, M, rng, pooled_baseline=pooled_baseline)


def tim_impute(dataset: TrialDataset, rng: np.random.Generator, M: int) -> list[CompletedDataset]:
    return impute(dataset, "tim", M, rng)


def quan_impute(dataset: TrialDataset, rng: np.random.Generator, M: int) -> list[CompletedDataset]:
    return impute(dataset, "quan", M, rng)


def bocf(dataset: TrialDataset) -> CompletedDataset:
    return impute(dataset, "bocf", 1, np.random.default_rng(0))[0]


def impute(
    dataset: TrialDataset,
    method: str,
    M: int,
    rng: np.random.Generator,
    pooled_baseline: bool = True,
) -> list[CompletedDataset]:
    """Completed datasets for any imputation token in :data:`IMPUTATION_METHODS`."""
    if M < 1:
        raise ValueError("M must be positive")
    stacks = impute_stacks(dataset, method, M, rng, pooled_baseline)
    return stacks_to_completed(dataset, stacks, method)


# -- direct likelihood ------------------------------------------------------


@dataclass(frozen=True)
class DirectMLArm:
    pi_hat: float
    mu_delta_hat: float

    @property
    def estimate(self) -> float:
        return self.pi_hat * self.mu_delta_hat


@dataclass(frozen=True)
class DirectMLResult:
    arms: dict[str, DirectMLArm]

    def value(self, quantity: str) -> float:
        if quantity in self.arms:
            return self.arms[quantity].estimate
        a, _, b = quantity.partition("-")
        return self.arms[a].estimate - self.arms[b].estimate

    def quantities(self) -> list[str]:
        labels = list(self.arms)
        return labels + [f"{lab}-{labels[0]}" for lab in labels[1:]]


def direct_ml_arm(values: np.ndarray) -> DirectMLArm:
    values = check_trial_matrix(values)
    mean, _ = implied_moments(values)
    pi_hat = float(np.mean(~np.isnan(values[:, -1])))
    return DirectMLArm(pi_hat, float(mean[-1] - mean[0]))


def direct_ml_estimate(dataset: TrialDataset) -> DirectMLResult:
    """Observed final-visit fraction times the ML mean change, per arm."""
    return DirectMLResult({a.label: direct_ml_arm(a.values) for a in dataset.arms})


# -- estimators ---------------------------------------------------------------


class ReturnToBaselineImputer(TransformerMixin, BaseEstimator):
    """Return-to-baseline imputer for ``n x (K+1)`` outcome matrices.

    Column 0 is baseline; NaN marks missing cells, which must follow a
    monotone pattern.  ``groups`` gives the treatment arm of every row; each
    arm gets its own imputation model.

    Parameters
    ----------
    method : {"nim-mean", "nim-meanvar", "tim", "quan", "bocf"}
    n_imputations : int
        Copies returned by :meth:`sample`.  ``transform`` always returns one.
    pooled_baseline : bool
        Return to the baseline mean (and SD) pooled across arms rather than
        each arm's own.
    random_state : int, Generator or None
    """

    def __init__(self, method="nim-mean", n_imputations=5, pooled_baseline=True, random_state=None):
        self.method = method
        self.n_imputations = n_imputations
        self.pooled_baseline = pooled_baseline
        self.random_state = random_state

    def fit(self, X, y=None, groups=None):
        if self.method not in IMPUTATION_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        X = check_trial_matrix(X)
        labels, codes = check_groups(groups, X.shape[0])
        self.n_features_in_ = X.shape[1]
        self.groups_ = labels
        self.params_ = {}
        x0 = X[:, 0]
        for g, label in enumerate(labels):
            values = X[codes == g]
            xs = x0 if self.pooled_baseline else values[:, 0]
            p = {"xbar": float(xs.mean()), "s_x": float(xs.std(ddof=1))}
            if self.method.startswith("nim"):
                p["regressions"] = fit_monotone_regressions(values)
            elif self.method == "tim":
                p["sd"] = tim_tau(values)
            elif self.method == "quan":
                p["sd"] = float(np.sqrt(2 * quan_tau2(values)))
            else:
                p["sd"] = 0.0
            self.params_[label] = p
        self._rng = check_random_state(self.random_state)
        return self

    def sample(self, X, groups=None, n_imputations=None) -> np.ndarray:
        """``(M, n, K+1)`` stack of completed copies of ``X``."""
        check_is_fitted(self, "params_")
        M = self.n_imputations if n_imputations is None else n_imputations
        X = check_trial_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, fitted on {self.n_features_in_}")
        labels, codes = check_groups(groups, X.shape[0])
        out = np.repeat(X[None], M, axis=0)
        for g, label in enumerate(labels):
            if label not in self.params_:
                raise ValueError(f"group {label!r} was not seen during fit")
            p = self.params_[label]
            rows = codes == g
            values = X[rows]
            if self.method.startswith("nim"):
                s_x = p["s_x"] if self.method == "nim-meanvar" else None
                out[:, rows] = nim_stack(values, M, self._rng, p["xbar"], s_x, p["regressions"])
            else:
                out[:, rows] = noise_stack(values, M, self._rng, p["sd"])
        return out

    def transform(self, X, groups=None):
        return self.sample(X, groups, n_imputations=1)[0]

    def fit_transform(self, X, y=None, groups=None):
        return self.fit(X, groups=groups).transform(X, groups)


class DirectMLEstimator(BaseEstimator):
    """Implicit return-to-baseline estimate without imputation.

    After ``fit`` the per-arm retention fraction, ML mean change and their
    product are in ``pi_``, ``mu_delta_`` and ``estimate_``; ``difference_``
    holds each arm's estimate minus the first arm's.
    """

    def fit(self, X, y=None, groups=None):
        X = check_trial_matrix(X)
        labels, codes = check_groups(groups, X.shape[0])
        arms = {str(label): direct_ml_arm(X[codes == g]) for g, label in enumerate(labels)}
        self.result_ = DirectMLResult(arms)
        self.pi_ = {k: a.pi_hat for k, a in arms.items()}
        self.mu_delta_ = {k: a.mu_delta_hat for k, a in arms.items()}
        self.estimate_ = {k: a.estimate for k, a in arms.items()}
        ref = next(iter(arms))
        self.difference_ = {
            f"{k}-{ref}": a.estimate - arms[ref].estimate for k, a in arms.items() if k != ref
        }
        return self
