"""Synthetic longitudinal trials with monotone logistic dropout.

Each arm draws ``(Y_0, ..., Y_K)`` i.i.d. from a multivariate normal.  Visit
``k`` is retained with probability ``1 / (1 + exp(alpha0 + alpha1 * Y_{k-1}))``
given visits ``< k`` were retained; once a visit is dropped every later visit
is dropped too.  Baseline is always observed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.special import expit

from .mvn import CovarianceSpec, MvnDistribution, ParameterError, mvn_sample
from .validation import check_trial_matrix, is_monotone

__all__ = [
    "ArmSpec",
    "MissingnessSpec",
    "ArmData",
    "TrialDataset",
    "ArmTruth",
    "ScenarioTruth",
    "generate_complete",
    "retention_prob",
    "apply_missingness",
    "generate_trial",
    "true_rtb_mean",
]


@dataclass(frozen=True)
class ArmSpec:
    """One treatment arm: label, size, visit means and covariance."""

    label: str
    n: int
    means: np.ndarray
    cov: CovarianceSpec = field(default_factory=CovarianceSpec)

    def __post_init__(self):
        means = np.atleast_1d(np.array(self.means, dtype=float))
        if means.ndim != 1 or means.size < 2:
            raise ParameterError("means needs baseline plus at least one visit")
        if self.n < 2:
            raise ParameterError(f"arm {self.label!r} needs n >= 2, got {self.n}")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        # fail early on a bad covariance
        self.distribution()

    @property
    def K(self) -> int:
        return self.means.size - 1

    @property
    def mu_delta_y(self) -> float:
        """True mean change from baseline to the final visit."""
        return float(self.means[-1] - self.means[0])

    def distribution(self) -> MvnDistribution:
        return MvnDistribution(self.means, self.cov.build(self.means.size))


@dataclass(frozen=True)
class MissingnessSpec:
    mechanism: Literal["MCAR", "MDO"] = "MCAR"
    alpha0: float = 0.0
    alpha1: float = 0.0

    def __post_init__(self):
        if self.mechanism not in ("MCAR", "MDO"):
            raise ParameterError(f"unknown mechanism {self.mechanism!r}")
        if (self.mechanism == "MCAR") != (self.alpha1 == 0):
            raise ParameterError(
                f"mechanism {self.mechanism} inconsistent with alpha1={self.alpha1}"
            )

    @property
    def monotone(self) -> bool:
        return True


@dataclass(frozen=True)
class ArmData:
    """Observed outcomes for one arm; NaN marks a missing cell."""

    label: str
    values: np.ndarray

    def __post_init__(self):
        values = check_trial_matrix(self.values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def mask(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.values.shape[1] - 1

    @property
    def n_completers(self) -> int:
        return int(self.mask[:, -1].sum())


@dataclass(frozen=True)
class TrialDataset:
    """All arms of a trial.  The first arm is the reference (placebo)."""

    arms: tuple[ArmData, ...]

    def __post_init__(self):
        arms = tuple(self.arms)
        if not arms:
            raise ValueError("a trial needs at least one arm")
        if len({a.K for a in arms}) != 1:
            raise ValueError("arms disagree on the number of visits")
        if len({a.label for a in arms}) != len(arms):
            raise ValueError("arm labels must be unique")
        object.__setattr__(self, "arms", arms)

    @property
    def K(self) -> int:
        return self.arms[0].K

    @property
    def labels(self) -> list[str]:
        return [a.label for a in self.arms]

    def __getitem__(self, label: str) -> ArmData:
        for arm in self.arms:
            if arm.label == label:
                return arm
        raise KeyError(label)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """``(values, groups)`` with all arms stacked row-wise."""
        values = np.vstack([a.values for a in self.arms])
        groups = np.concatenate([np.full(a.n, a.label, dtype=object) for a in self.arms])
        return values, groups

    @classmethod
    def from_stacked(cls, values, groups) -> "TrialDataset":
        values = np.asarray(values, dtype=float)
        groups = np.asarray(groups, dtype=object)
        labels = list(dict.fromkeys(groups.tolist()))
        return cls(tuple(ArmData(str(g), values[groups == g]) for g in labels))


def generate_complete(spec: ArmSpec, rng: np.random.Generator) -> np.ndarray:
    """``spec.n`` i.i.d. rows from ``N(spec.means, cov)``."""
    return mvn_sample(spec.distribution(), rng, size=spec.n)


def retention_prob(alpha0: float, alpha1: float, y_prev):
    """Probability of staying observed: ``1 / (1 + exp(alpha0 + alpha1 * y_prev))``."""
    return expit(-(alpha0 + alpha1 * np.asarray(y_prev, dtype=float)))


def _retained(complete: np.ndarray, spec: MissingnessSpec, rng: np.random.Generator):
    n, d = complete.shape
    u = rng.random((n, d - 1))
    observed = np.ones((n, d), dtype=bool)
    for k in range(1, d):
        p = retention_prob(spec.alpha0, spec.alpha1, complete[:, k - 1])
        observed[:, k] = observed[:, k - 1] & (u[:, k - 1] < p)
    return observed


def apply_missingness(
    complete: np.ndarray,
    spec: MissingnessSpec,
    rng: np.random.Generator,
    label: str = "arm",
) -> ArmData:
    """Blank out cells of ``complete`` by sequential logistic dropout."""
    complete = np.asarray(complete, dtype=float)
    if complete.ndim != 2 or complete.shape[1] < 2:
        raise ValueError("complete data needs a baseline column and at least one visit")
    observed = _retained(complete, spec, rng)
    assert is_monotone(observed)
    return ArmData(label, np.where(observed, complete, np.nan))


def generate_trial(
    arms: Sequence[ArmSpec], missingness: MissingnessSpec, rng: np.random.Generator
) -> TrialDataset:
    out = []
    for spec in arms:
        complete = generate_complete(spec, rng)
        out.append(apply_missingness(complete, missingness, rng, label=spec.label))
    return TrialDataset(tuple(out))


@dataclass(frozen=True)
class ArmTruth:
    pi: float
    mu_delta_y: float

    @property
    def mu_delta_rtb(self) -> float:
        return self.pi * self.mu_delta_y

    @property
    def p_missing(self) -> float:
        return 1.0 - self.pi


@dataclass(frozen=True)
class ScenarioTruth:
    """Target values of the RTB mean change, per arm and for arm contrasts."""

    arms: dict[str, ArmTruth]

    @property
    def labels(self) -> list[str]:
        return list(self.arms)

    def value(self, quantity: str) -> float:
        """Truth for an arm label or a ``"B-A"`` contrast."""
        if quantity in self.arms:
            return self.arms[quantity].mu_delta_rtb
        a, sep, b = quantity.partition("-")
        if sep and a in self.arms and b in self.arms:
            return self.arms[a].mu_delta_rtb - self.arms[b].mu_delta_rtb
        raise KeyError(quantity)


def true_rtb_mean(
    arms: Sequence[ArmSpec],
    missingness: MissingnessSpec,
    mc_subjects: int,
    rng: np.random.Generator,
    chunk: int = 250_000,
) -> ScenarioTruth:
    """Monte-Carlo retention fraction times the analytic mean change, per arm."""
    if mc_subjects < 1:
        raise ValueError("mc_subjects must be positive")
    out = {}
    for spec in arms:
        dist = spec.distribution()
        kept = 0
        remaining = mc_subjects
        while remaining:
            m = min(chunk, remaining)
            complete = mvn_sample(dist, rng, size=m)
            kept += int(_retained(complete, missingness, rng)[:, -1].sum())
            remaining -= m
        out[spec.label] = ArmTruth(pi=kept / mc_subjects, mu_delta_y=spec.mu_delta_y)
    return ScenarioTruth(out)
