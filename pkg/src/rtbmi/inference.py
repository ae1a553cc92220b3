"""Analysis of completed data: ANCOVA, Rubin's rules and the bootstrap."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .datagen import ArmData, TrialDataset
from .imputation import CompletedDataset, ImputationError, SingularDesignError
from .methods import METHODS, direct_ml_estimate, impute_stacks

__all__ = [
    "AncovaResult",
    "PooledEstimate",
    "BootstrapResult",
    "BootstrapError",
    "quantities",
    "ancova",
    "ancova_arrays",
    "rubin_pool",
    "single_estimate",
    "expanded_alpha",
    "analyze_stacks",
    "estimate",
    "bootstrap_ci",
]

log = logging.getLogger(__name__)


class BootstrapError(RuntimeError):
    """Too many bootstrap replicates failed."""


def quantities(labels) -> list[str]:
    """Arm labels followed by each arm's contrast with the first arm."""
    labels = list(labels)
    return labels + [f"{lab}-{labels[0]}" for lab in labels[1:]]


@dataclass(frozen=True)
class AncovaResult:
    """LS-means of change from baseline at the pooled baseline mean."""

    labels: tuple[str, ...]
    estimates: dict[str, float]
    se: dict[str, float]
    slope: float
    df: int
    degenerate: bool = False

    @property
    def lsmeans(self) -> dict[str, float]:
        return {k: self.estimates[k] for k in self.labels}

    @property
    def differences(self) -> dict[str, float]:
        return {k: v for k, v in self.estimates.items() if k not in self.labels}


def _contrasts(n_arms: int) -> np.ndarray:
    # rows: LS-mean of each arm, then arm j minus arm 0; columns follow the design
    p = n_arms + 1
    L = np.zeros((2 * n_arms - 1, p))
    L[:n_arms, 0] = 1.0
    for j in range(1, n_arms):
        L[j, j] = 1.0
        L[n_arms + j - 1, j] = 1.0
    return L


def ancova_arrays(change, baseline, codes, n_arms: int):
    """OLS of change on intercept, arm dummies and centred baseline.

    ``change`` may be ``(n,)`` or ``(M, n)``; all ``M`` responses share the
    design, so they are solved together.  Returns ``(estimates, variances,
    slope, df)`` with estimates and variances of shape ``(M, 2*I-1)``.
    """
    change = np.atleast_2d(np.asarray(change, dtype=float))
    baseline = np.asarray(baseline, dtype=float)
    n = baseline.size
    p = n_arms + 1
    design = np.zeros((n, p))
    design[:, 0] = 1.0
    for j in range(1, n_arms):
        design[:, j] = codes == j
    design[:, -1] = baseline - baseline.mean()
    if n <= p or np.linalg.matrix_rank(design) < p:
        raise SingularDesignError("ANCOVA design is rank deficient")
    xtx_inv = np.linalg.inv(design.T @ design)
    beta = (change @ design) @ xtx_inv  # (M, p)
    resid = change - beta @ design.T
    df = n - p
    s2 = np.einsum("mi,mi->m", resid, resid) / df
    L = _contrasts(n_arms)
    est = beta @ L.T
    var = s2[:, None] * np.einsum("qi,ij,qj->q", L, xtx_inv, L)[None, :]
    return est, var, beta[:, -1], df


def _completed_arrays(completed: CompletedDataset):
    baseline = np.concatenate([a[:, 0] for a in completed.arms])
    final = np.concatenate([a[:, -1] for a in completed.arms])
    codes = np.concatenate([np.full(a.shape[0], j) for j, a in enumerate(completed.arms)])
    return final, baseline, codes


def ancova(completed: CompletedDataset) -> AncovaResult:
    """ANCOVA of final-visit change from baseline with arm as a factor."""
    final, baseline, codes = _completed_arrays(completed)
    if np.isnan(final).any():
        raise ValueError("final visit still has missing values")
    if any(a.shape[0] == 0 for a in completed.arms):
        raise ValueError("every arm needs at least one subject")
    est, var, slope, df = ancova_arrays(final - baseline, baseline, codes, len(completed.labels))
    names = quantities(completed.labels)
    se = np.sqrt(var[0])
    degenerate = bool(np.all(se <= 1e-12 * (1.0 + np.abs(est[0]).max())))
    return AncovaResult(
        tuple(completed.labels),
        dict(zip(names, est[0].tolist())),
        dict(zip(names, se.tolist())),
        float(slope[0]),
        int(df),
        degenerate,
    )


@dataclass(frozen=True)
class PooledEstimate:
    point: float
    within_var: float
    between_var: float
    total_var: float
    df: float
    ci: tuple[float, float]
    M: int

    @property
    def se(self) -> float:
        return float(np.sqrt(self.total_var))

    def covers(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]


def _rubin(est: np.ndarray, var: np.ndarray, alpha: float):
    M = est.shape[0]
    point = est.mean(axis=0)
    W = var.mean(axis=0)
    B = est.var(axis=0, ddof=1)
    T = W + (1 + 1 / M) * B
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (1 + 1 / M) * B / W
        df = np.where(B > 0, (M - 1) * (1 + 1 / r) ** 2, np.inf)
    half = stats.t.ppf(1 - alpha / 2, df) * np.sqrt(T)
    return point, W, B, T, df, half


def rubin_pool(estimates, variances, alpha: float = 0.05) -> PooledEstimate:
    """Combine per-imputation estimates with Rubin's rules.

    ``T = W + (1 + 1/M) B`` and ``df = (M - 1)(1 + W / ((1 + 1/M) B))**2``;
    with ``B = 0`` the df is infinite and the interval uses the normal
    quantile.
    """
    est = np.asarray(estimates, dtype=float)
    var = np.asarray(variances, dtype=float)
    if est.ndim != 1 or est.shape != var.shape:
        raise ValueError("estimates and variances must be 1-D and of equal length")
    if est.size < 2:
        raise ValueError(f"Rubin's rules need M >= 2, got {est.size}")
    if np.any(var < 0):
        raise ValueError("variances must be non-negative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    point, W, B, T, df, half = _rubin(est[:, None], var[:, None], alpha)
    return PooledEstimate(
        float(point[0]), float(W[0]), float(B[0]), float(T[0]), float(df[0]),
        (float(point[0] - half[0]), float(point[0] + half[0])), est.size,
    )


def single_estimate(point: float, variance: float, df: float, alpha: float = 0.05) -> PooledEstimate:
    """Wrap a single-imputation (or deterministic) estimate."""
    half = stats.t.ppf(1 - alpha / 2, df) * np.sqrt(variance)
    return PooledEstimate(point, variance, 0.0, variance, df, (point - half, point + half), 1)


def expanded_alpha(alpha: float, n_tilde: int) -> float:
    """Nominal level for the t-expanded bootstrap interval.

    ``alpha' = 2 * Phi(n/(n-2) * t_{alpha/2, n-2})`` with the lower t
    quantile, so ``alpha' < alpha`` and the interval widens for small ``n``.
    """
    if n_tilde <= 2:
        raise ValueError(f"n_tilde must exceed 2, got {n_tilde}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    df = n_tilde - 2
    return float(2 * stats.norm.cdf(n_tilde / df * stats.t.ppf(alpha / 2, df)))


def analyze_stacks(stacks, labels, alpha: float = 0.05) -> dict[str, PooledEstimate]:
    """ANCOVA on every imputation of the stacked arms, then pool."""
    M = stacks[0].shape[0]
    baseline = np.concatenate([s[0, :, 0] for s in stacks])
    final = np.concatenate([s[:, :, -1] for s in stacks], axis=1)
    codes = np.concatenate([np.full(s.shape[1], j) for j, s in enumerate(stacks)])
    est, var, _, df = ancova_arrays(final - baseline, baseline, codes, len(stacks))
    names = quantities(labels)
    if M == 1:
        return {q: single_estimate(float(est[0, i]), float(var[0, i]), df, alpha) for i, q in enumerate(names)}
    point, W, B, T, rdf, half = _rubin(est, var, alpha)
    return {
        q: PooledEstimate(
            float(point[i]), float(W[i]), float(B[i]), float(T[i]), float(rdf[i]),
            (float(point[i] - half[i]), float(point[i] + half[i])), M,
        )
        for i, q in enumerate(names)
    }


def _point_only(value: float) -> PooledEstimate:
    nan = float("nan")
    return PooledEstimate(value, nan, nan, nan, nan, (nan, nan), 1)


def estimate(
    trial: TrialDataset,
    method: str,
    M: int,
    rng: np.random.Generator,
    alpha: float = 0.05,
    pooled_baseline: bool = True,
):
    """Run one method end to end.

    Returns ``(pooled, stacks)``: pooled estimates keyed by quantity, and
    the completed stacks (``None`` for ``direct-ml``, which has no SE of its
    own and reports point estimates only).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "direct-ml":
        res = direct_ml_estimate(trial)
        return {q: _point_only(res.value(q)) for q in quantities(trial.labels)}, None
    stacks = impute_stacks(trial, method, M, rng, pooled_baseline)
    return analyze_stacks(stacks, trial.labels, alpha), stacks


@dataclass(frozen=True)
class BootstrapResult:
    point: float
    se_b: float
    ci_b: tuple[float, float]
    n_tilde: int
    alpha_prime: float
    n_failed: int = 0

    def covers(self, value: float) -> bool:
        return self.ci_b[0] <= value <= self.ci_b[1]


def _points(trial: TrialDataset, method: str, M: int, rng, pooled_baseline: bool) -> np.ndarray:
    names = quantities(trial.labels)
    if method == "direct-ml":
        res = direct_ml_estimate(trial)
        return np.array([res.value(q) for q in names])
    stacks = impute_stacks(trial, method, M, rng, pooled_baseline)
    baseline = np.concatenate([s[0, :, 0] for s in stacks])
    final = np.concatenate([s[:, :, -1] for s in stacks], axis=1)
    codes = np.concatenate([np.full(s.shape[1], j) for j, s in enumerate(stacks)])
    est, _, _, _ = ancova_arrays(final - baseline, baseline, codes, len(stacks))
    return est.mean(axis=0)


def bootstrap_ci(
    trial: TrialDataset,
    method: str,
    M: int,
    B: int,
    alpha: float,
    rng: np.random.Generator,
    point: dict[str, float] | None = None,
    pooled_baseline: bool = True,
    max_fail: float = 0.05,
) -> dict[str, BootstrapResult]:
    """Stratified subject bootstrap of the whole impute-analyze-pool pipeline.

    Subjects are resampled with replacement within each arm.  The standard
    error is the SD of the ``B`` re-estimates; the interval is
    ``point +/- t_{1-alpha'/2, n-2} * se`` with ``n`` the number of completers
    (summed over both arms for a contrast) and ``alpha'`` from
    :func:`expanded_alpha`.  ``M`` is the imputation count inside each
    bootstrap replicate; ``point`` defaults to a fresh ``M``-imputation run
    on the original data.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if B < 2:
        raise ValueError("need at least two bootstrap replicates")
    names = quantities(trial.labels)
    if point is None:
        base = _points(trial, method, M, rng, pooled_baseline)
        point = dict(zip(names, base.tolist()))

    draws = []
    failed = 0
    for _ in range(B):
        arms = []
        for arm in trial.arms:
            idx = rng.integers(0, arm.n, arm.n)
            arms.append(ArmData(arm.label, arm.values[idx]))
        try:
            draws.append(_points(TrialDataset(tuple(arms)), method, M, rng, pooled_baseline))
        except (ImputationError, np.linalg.LinAlgError) as exc:
            failed += 1
            log.debug("bootstrap replicate failed: %s", exc)
    if failed > max_fail * B:
        raise BootstrapError(f"{failed} of {B} bootstrap replicates failed")
    draws = np.array(draws)
    se = draws.std(axis=0, ddof=1)

    completers = {a.label: a.n_completers for a in trial.arms}
    out = {}
    for i, q in enumerate(names):
        if q in completers:
            n_tilde = completers[q]
        else:
            a, _, b = q.partition("-")
            n_tilde = completers[a] + completers[b]
        a_prime = expanded_alpha(alpha, n_tilde)
        half = float(stats.t.ppf(1 - a_prime / 2, n_tilde - 2) * se[i])
        theta = float(point[q])
        out[q] = BootstrapResult(theta, float(se[i]), (theta - half, theta + half), n_tilde, a_prime, failed)
    return out

