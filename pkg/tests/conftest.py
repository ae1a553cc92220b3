import numpy as np
import pytest

from rtbmi.datagen import ArmData, TrialDataset

# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def monotone_matrix(rng, n=40, K=3, drop=0.3, rho=0.5):
    """Correlated outcomes with random monotone dropout; baseline always observed."""
    cov = np.full((K + 1, K + 1), rho) + (1 - rho) * np.eye(K + 1)
    X = rng.multivariate_normal(np.zeros(K + 1), cov, size=n)
    last = np.full(n, K)
    gone = rng.random(n) < drop
    last[gone] = rng.integers(0, K, gone.sum())
    for i in range(n):
        X[i, last[i] + 1 :] = np.nan
    return X


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_trial(rng):
    return TrialDataset(
        (
            ArmData("P", monotone_matrix(rng, n=60, K=2)),
            ArmData("E", monotone_matrix(rng, n=50, K=2) - [0.0, 0.5, 1.0]),
        )
    )
