"""Dense multivariate-normal primitives.

Covariance construction, a pivot-reporting Cholesky factorization, sampling
and Schur-complement conditioning.  Dimensions here are small (one row or
column per visit), so everything is plain dense numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

__all__ = [
    "ParameterError",
    "FactorizationError",
    "CovarianceSpec",
    "MvnDistribution",
    "build_cs_covariance",
    "cholesky",
    "mvn_sample",
    "conditional_mvn",
]

SYMMETRY_TOL = 1e-12
PIVOT_TOL = 1e-12


class ParameterError(ValueError):
    """Invalid distribution parameter."""


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization failed at a non-positive pivot."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot} has value {value:.3g}"
        )


def build_cs_covariance(sigma: float, rho: float, dim: int) -> np.ndarray:
    """Compound-symmetry covariance: ``sigma**2`` on the diagonal and
    ``rho * sigma**2`` everywhere else.

    ``rho`` must lie in ``(-1/(dim-1), 1)`` for the matrix to be positive
    definite.
    """
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    lower = -1.0 / (dim - 1) if dim > 1 else -np.inf
    if dim > 1 and not lower < rho < 1:
        raise ParameterError(f"rho={rho} outside ({lower:.4g}, 1) for dim={dim}")
    var = float(sigma) ** 2
    cov = np.full((dim, dim), rho * var)
    np.fill_diagonal(cov, var)
    return cov


def _check_symmetric(cov: np.ndarray) -> None:
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ParameterError(f"covariance must be square, got shape {cov.shape}")
    scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
    asym = np.max(np.abs(cov - cov.T))
    if asym > SYMMETRY_TOL * scale:
        raise ParameterError(f"covariance is not symmetric (max asymmetry {asym:.3g})")


def cholesky(cov) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == cov``.

    Raises :class:`FactorizationError` naming the first pivot that falls
    below ``1e-12`` times the largest diagonal entry.
    """
    a = np.array(cov, dtype=float)
    _check_symmetric(a)
    n = a.shape[0]
    threshold = PIVOT_TOL * max(np.max(np.diag(a)), 0.0)
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > threshold:
            raise FactorizationError(j, d)
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


@dataclass(frozen=True)
class CovarianceSpec:
    """How to build a per-arm covariance matrix.

    ``kind="compound-symmetry"`` uses ``sigma`` and ``rho``;
    ``kind="explicit"`` uses ``matrix`` verbatim.
    """

    kind: Literal["compound-symmetry", "explicit"] = "compound-symmetry"
    sigma: float = 1.0
    rho: float = 0.0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("compound-symmetry", "explicit"):
            raise ParameterError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "explicit":
            if self.matrix is None:
                raise ParameterError("explicit covariance needs a matrix")
            m = np.array(self.matrix, dtype=float)
            _check_symmetric(m)
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)

    def build(self, dim: int) -> np.ndarray:
        if self.kind == "explicit":
            if self.matrix.shape[0] != dim:
                raise ParameterError(
                    f"explicit covariance is {self.matrix.shape[0]}x{self.matrix.shape[0]}, "
                    f"expected {dim}x{dim}"
                )
            return self.matrix.copy()
        return build_cs_covariance(self.sigma, self.rho, dim)


@dataclass(frozen=True)
class MvnDistribution:
    """Immutable multivariate normal with a cached Cholesky factor."""

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.atleast_2d(np.array(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ParameterError(
                f"mean of length {mean.size} does not match covariance {cov.shape}"
            )
        chol = cholesky(cov)
        for arr in (mean, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.size


def mvn_sample(dist: MvnDistribution, rng: np.random.Generator, size: int | None = None):
    """Draw ``mean + chol @ z`` with ``z`` standard normal.

    Returns a vector, or a ``(size, dim)`` matrix when ``size`` is given.
    """
    if size is None:
        z = rng.standard_normal(dist.dim)
        return dist.mean + dist.chol @ z
    z = rng.standard_normal((size, dist.dim))
    return dist.mean + z @ dist.chol.T


def conditional_mvn(
    dist: MvnDistribution, observed_idx: Sequence[int], observed_vals
) -> MvnDistribution:
    """Distribution of the unobserved coordinates given the observed ones.

    Mean ``mu_2 + S21 S11^{-1} (x - mu_1)``; covariance is the Schur
    complement ``S22 - S21 S11^{-1} S12``.  Returned coordinates keep their
    original order.
    """
    obs = np.asarray(observed_idx, dtype=int)
    vals = np.atleast_1d(np.asarray(observed_vals, dtype=float))
    if obs.ndim != 1 or obs.size == 0:
        raise ParameterError("observed_idx must be a non-empty index list")
    if np.unique(obs).size != obs.size or obs.min() < 0 or obs.max() >= dist.dim:
        raise ParameterError(f"invalid observed indices {obs.tolist()}")
    if vals.shape != obs.shape:
        raise ParameterError("observed_vals must match observed_idx in length")
    rest = np.setdiff1d(np.arange(dist.dim), obs)
    if rest.size == 0:
        raise ParameterError("nothing left to condition on: all coordinates observed")

    s11 = dist.cov[np.ix_(obs, obs)]
    s21 = dist.cov[np.ix_(rest, obs)]
    s22 = dist.cov[np.ix_(rest, rest)]
    L = cholesky(s11)
    # S11^{-1} S12 via two triangular solves
    w = np.linalg.solve(L.T, np.linalg.solve(L, s21.T))
    mean = dist.mean[rest] + w.T @ (vals - dist.mean[obs])
    cov = s22 - s21 @ w
    return MvnDistribution(mean, 0.5 * (cov + cov.T))
