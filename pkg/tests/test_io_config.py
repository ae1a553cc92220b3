import io

import numpy as np
import pytest

from rtbmi.config import ConfigError, load_config, parse_config, shipped_configs
from rtbmi.io import read_completed_csv, read_dataset_csv, write_completed_csv, write_dataset_csv
from rtbmi.methods import impute


def test_dataset_csv_round_trip(small_trial, tmp_path):
    path = tmp_path / "trial.csv"
    write_dataset_csv(small_trial, path)
    back = read_dataset_csv(path)
    assert back.labels == small_trial.labels
    for a, b in zip(back.arms, small_trial.arms):
        np.testing.assert_array_equal(a.values, b.values)


def test_completed_csv_round_trip(small_trial):
    completed = impute(small_trial, "nim-mean", 3, np.random.default_rng(0))
    buf = io.StringIO()
    write_completed_csv(completed, buf)
    buf.seek(0)
    back = read_completed_csv(buf)
    assert [c.m for c in back] == [1, 2, 3]
    for a, b in zip(back, completed):
        for x, y in zip(a.arms, b.arms):
            np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "id,arm,y0,y1\n1,P,0,1\n",
        "subject_id,arm,y0,y2\n1,P,0,1\n",
        "subject_id,arm,y0,y1\n1,P,0\n",
        "subject_id,arm,y0,y1,y2\n1,P,0,,1\n",
    ],
)
def test_dataset_csv_rejects_malformed(text):
    with pytest.raises(ValueError):
        read_dataset_csv(io.StringIO(text))


def test_shipped_configs_cover_all_tables():
    names = [c.name for c in shipped_configs()]
    assert len(names) == 12
    for prefix, count in (("table2", 4), ("table3", 4), ("table4", 4)):
        cfgs = shipped_configs(prefix)
        assert len(cfgs) == count
        assert all(c.replicates == 1000 and c.imputations == 50 for c in cfgs)
    assert {c.K for c in shipped_configs("table3")} == {5}
    assert all(c.bootstrap == 100 for c in shipped_configs("table4"))


def test_table4_arms_have_different_covariances():
    cfg = shipped_configs("table4-k1-mdo")[0]
    P, E = (a.distribution().cov for a in cfg.arms)
    assert not np.allclose(P, E)
    assert cfg.missingness.alpha0 == -1.05


def test_overrides_and_full_scale():
    cfg = shipped_configs("table2-k1-mdo-rho0")[0]
    small = cfg.with_overrides(replicates=5, seed=None, methods=["tim"])
    assert small.replicates == 5 and small.seed is None and small.methods == ("tim",)
    big = cfg.full_scale()
    assert (big.replicates, big.imputations) == (5000, 200)


def _base():
    return {
        "name": "x",
        "n": 10,
        "missingness": {"mechanism": "MCAR", "alpha0": -1.0, "alpha1": 0.0},
        "arms": [{"label": "P", "means": [0.0, 0.0]}],
    }


@pytest.mark.parametrize(
    "patch",
    [
        {"methods": ["locf"]},
        {"imputations": 1},
        {"bootstrap": 1},
        {"alpha": 1.5},
        {"colour": "red"},
        {"arms": [{"label": "P", "means": [0.0, 0.0], "cov": {"kind": "compound-symmetry", "rho": 1.0}}]},
        {"arms": [{"label": "P", "means": [0.0, 0.0], "cov": {"kind": "banded"}}]},
        {"arms": [{"label": "P", "means": [0.0, 0.0], "cov": {"kind": "sd-corr", "sd": [1.0], "corr": 0.1}}]},
        {"missingness": {"mechanism": "MCAR", "alpha0": -1.0, "alpha1": 1.0}},
        {"arms": [{"means": [0.0, 0.0]}]},
    ],
)
def test_config_validation(patch):
    data = _base()
    data.update(patch)
    with pytest.raises(ConfigError):
        parse_config(data)


def test_load_config_syntax_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("name = \n")
    with pytest.raises(ConfigError):
        load_config(path)
