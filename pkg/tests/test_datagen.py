import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from rtbmi import rng as rngs
from rtbmi.datagen import (
    ArmData,
    ArmSpec,
    MissingnessSpec,
    TrialDataset,
    apply_missingness,
    generate_trial,
    retention_prob,
    true_rtb_mean,
)
from rtbmi.mvn import CovarianceSpec, ParameterError
from rtbmi.validation import NonMonotoneError, is_monotone


def test_retention_prob_values():
    assert retention_prob(0.0, 0.0, 5.0) == pytest.approx(0.5)
    assert retention_prob(-0.85, 0.0, 0.0) == pytest.approx(1 / (1 + np.exp(-0.85)))
    assert retention_prob(-1.0, 1.0, 1.0) == pytest.approx(0.5)
    # higher previous value means more dropout when alpha1 > 0
    assert retention_prob(-1.0, 1.0, 2.0) < retention_prob(-1.0, 1.0, 0.0)


def test_missingness_spec_consistency():
    with pytest.raises(ParameterError):
        MissingnessSpec("MCAR", -1.0, 1.0)
    with pytest.raises(ParameterError):
        MissingnessSpec("MDO", -1.0, 0.0)
    with pytest.raises(ParameterError):
        MissingnessSpec("MNAR", 0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 10_000),
    st.integers(1, 6),
    st.floats(-3, 1),
    st.floats(0, 2),
)
def test_generated_masks_are_monotone(seed, K, a0, a1):
    miss = MissingnessSpec("MCAR" if a1 == 0 else "MDO", a0, a1)
    arm = ArmSpec("P", 30, np.zeros(K + 1), CovarianceSpec(rho=0.3))
    trial = generate_trial([arm], miss, np.random.default_rng(seed))
    mask = trial["P"].mask
    assert mask[:, 0].all()
    assert is_monotone(mask)


def test_observed_cells_equal_complete_data():
    complete = np.random.default_rng(1).standard_normal((50, 4))
    arm = apply_missingness(complete, MissingnessSpec("MDO", -1.0, 1.0), np.random.default_rng(2))
    obs = arm.mask
    np.testing.assert_array_equal(arm.values[obs], complete[obs])


def test_mcar_dropout_independent_of_outcome():
    complete = np.random.default_rng(4).standard_normal((200_000, 2))
    arm = apply_missingness(complete, MissingnessSpec("MCAR", -0.85, 0.0), np.random.default_rng(5))
    dropped = ~arm.mask[:, 1]
    assert dropped.mean() == pytest.approx(1 - 1 / (1 + np.exp(-0.85)), abs=0.004)
    r = np.corrcoef(dropped, complete[:, 0])[0, 1]
    assert abs(r) < 0.01


def test_mdo_dropout_depends_on_previous_value():
    complete = np.random.default_rng(6).standard_normal((50_000, 2))
    arm = apply_missingness(complete, MissingnessSpec("MDO", -1.0, 1.0), np.random.default_rng(7))
    dropped = ~arm.mask[:, 1]
    assert complete[dropped, 0].mean() > complete[~dropped, 0].mean() + 0.3


def test_truth_matches_quadrature():
    # K = 1: P(retained) = E[expit(-(a0 + a1 X))] with X ~ N(0, 1)
    pi = integrate.quad(lambda x: special.expit(1.0 - x) * stats.norm.pdf(x), -12, 12)[0]
    arms = [ArmSpec("P", 100, [0.0, 0.0]), ArmSpec("E", 100, [0.0, -1.0])]
    truth = true_rtb_mean(arms, MissingnessSpec("MDO", -1.0, 1.0), 400_000, np.random.default_rng(8))
    assert truth.arms["E"].pi == pytest.approx(pi, abs=0.003)
    assert truth.value("E") == pytest.approx(-pi, abs=0.003)
    assert truth.value("P") == 0.0
    assert truth.value("E-P") == pytest.approx(truth.value("E"))
    with pytest.raises(KeyError):
        truth.value("X")


def test_trial_dataset_validation():
    a = ArmData("P", np.zeros((3, 2)))
    with pytest.raises(ValueError):
        TrialDataset((a, ArmData("P", np.zeros((3, 2)))))
    with pytest.raises(ValueError):
        TrialDataset((a, ArmData("E", np.zeros((3, 3)))))
    with pytest.raises(NonMonotoneError):
        ArmData("P", np.array([[0.0, np.nan, 1.0]]))
    with pytest.raises(ValueError):
        ArmData("P", np.array([[np.nan, 1.0]]))


def test_stacked_round_trip(small_trial):
    X, groups = small_trial.stacked()
    back = TrialDataset.from_stacked(X, groups)
    assert back.labels == small_trial.labels
    for a, b in zip(back.arms, small_trial.arms):
        np.testing.assert_array_equal(a.values, b.values)


def test_keyed_streams_are_reproducible_and_distinct():
    a = rngs.stream(5, rngs.DATA, 3).random(4)
    b = rngs.stream(5, rngs.DATA, 3).random(4)
    c = rngs.stream(5, rngs.DATA, 4).random(4)
    d = rngs.stream(5, rngs.IMPUTE, 3).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)
    with pytest.raises(ValueError):
        rngs.stream(-1)
