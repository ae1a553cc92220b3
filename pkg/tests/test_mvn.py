import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtbmi.mvn import (
    CovarianceSpec,
    FactorizationError,
    MvnDistribution,
    ParameterError,
    build_cs_covariance,
    cholesky,
    conditional_mvn,
    mvn_sample,
)


def test_cs_covariance_entries():
    cov = build_cs_covariance(2.0, 0.25, 3)
    assert cov[0, 0] == 4.0
    assert cov[0, 2] == 1.0
    np.testing.assert_array_equal(cov, cov.T)


@pytest.mark.parametrize("rho", [-0.4, 0.0, 0.3, 0.9])
def test_cs_eigenvalues(rho):
    dim = 3
    eig = np.sort(np.linalg.eigvalsh(build_cs_covariance(1.0, rho, dim)))
    expected = np.sort([1 + (dim - 1) * rho] + [1 - rho] * (dim - 1))
    np.testing.assert_allclose(eig, expected, atol=1e-12)


@pytest.mark.parametrize("rho,dim", [(1.0, 2), (-0.5, 3), (-1.0, 2), (1.5, 4)])
def test_cs_rejects_out_of_range_rho(rho, dim):
    with pytest.raises(ParameterError):
        build_cs_covariance(1.0, rho, dim)


def test_cs_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        build_cs_covariance(0.0, 0.0, 2)


def test_cholesky_matches_numpy():
    cov = build_cs_covariance(1.3, 0.4, 5)
    np.testing.assert_allclose(cholesky(cov), np.linalg.cholesky(cov), atol=1e-13)


def test_cholesky_reports_pivot():
    cov = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(FactorizationError) as info:
        cholesky(cov)
    assert info.value.pivot == 1


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ParameterError):
        cholesky(np.array([[1.0, 0.2], [0.3, 1.0]]))


@st.composite
def pd_matrices(draw):
    dim = draw(st.integers(2, 6))
    seed = draw(st.integers(0, 2**32 - 1))
    g = np.random.default_rng(seed)
    A = g.standard_normal((dim, dim))
    return A @ A.T + dim * 0.1 * np.eye(dim), seed


@settings(max_examples=60, deadline=None)
@given(pd_matrices())
def test_cholesky_reconstructs(item):
    cov, _ = item
    L = cholesky(cov)
    assert np.allclose(np.triu(L, 1), 0)
    np.testing.assert_allclose(L @ L.T, cov, rtol=1e-10, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(pd_matrices(), st.data())
def test_conditional_matches_direct_inverse(item, data):
    cov, seed = item
    dim = cov.shape[0]
    g = np.random.default_rng(seed + 1)
    mean = g.standard_normal(dim)
    n_obs = data.draw(st.integers(1, dim - 1))
    obs = np.sort(g.choice(dim, n_obs, replace=False))
    rest = np.setdiff1d(np.arange(dim), obs)
    x = g.standard_normal(n_obs)

    cond = conditional_mvn(MvnDistribution(mean, cov), obs, x)

    s11_inv = np.linalg.inv(cov[np.ix_(obs, obs)])
    s21 = cov[np.ix_(rest, obs)]
    mean_ref = mean[rest] + s21 @ s11_inv @ (x - mean[obs])
    cov_ref = cov[np.ix_(rest, rest)] - s21 @ s11_inv @ s21.T
    scale = max(1.0, np.abs(cov).max())
    np.testing.assert_allclose(cond.mean, mean_ref, atol=1e-10 * scale)
    np.testing.assert_allclose(cond.cov, cov_ref, atol=1e-10 * scale)


def test_conditional_bivariate_textbook():
    dist = MvnDistribution([1.0, 2.0], [[4.0, 1.2], [1.2, 1.0]])
    cond = conditional_mvn(dist, [0], [3.0])
    assert cond.mean[0] == pytest.approx(2.0 + 1.2 / 4.0 * 2.0)
    assert cond.cov[0, 0] == pytest.approx(1.0 - 1.2**2 / 4.0)


@pytest.mark.parametrize("idx", [[], [0, 0], [5], [0, 1, 2]])
def test_conditional_rejects_bad_index(idx):
    dist = MvnDistribution(np.zeros(3), np.eye(3))
    with pytest.raises(ParameterError):
        conditional_mvn(dist, idx, np.zeros(len(idx)))


def test_distribution_is_read_only():
    dist = MvnDistribution([0.0, 0.0], np.eye(2))
    with pytest.raises(ValueError):
        dist.mean[0] = 1.0


def test_distribution_shape_mismatch():
    with pytest.raises(ParameterError):
        MvnDistribution([0.0, 0.0, 0.0], np.eye(2))


def test_sample_moments():
    cov = build_cs_covariance(1.0, 0.5, 4)
    dist = MvnDistribution([0.0, 1.0, 2.0, 3.0], cov)
    x = mvn_sample(dist, np.random.default_rng(3), size=200_000)
    assert x.shape == (200_000, 4)
    np.testing.assert_allclose(x.mean(axis=0), dist.mean, atol=0.01)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.015)
    assert mvn_sample(dist, np.random.default_rng(3)).shape == (4,)


def test_covariance_spec_explicit_dim_check():
    spec = CovarianceSpec("explicit", matrix=np.eye(2))
    np.testing.assert_array_equal(spec.build(2), np.eye(2))
    with pytest.raises(ParameterError):
        spec.build(3)
    with pytest.raises(ParameterError):
        CovarianceSpec("explicit")
    with pytest.raises(ParameterError):
        CovarianceSpec("banded")
