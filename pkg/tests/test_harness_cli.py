import math
import time
from dataclasses import astuple
from pathlib import Path

import numpy as np
import pytest

from rtbmi.cli import main
from rtbmi.config import shipped_configs
from rtbmi.harness import (
    SimulationError,
    emit_table,
    metrics_from_records,
    missingness_rows,
    read_table_csv,
    run_replicate,
    run_scenario,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "rtbmi" / "scenarios"


def _cfg(name="table2-k1-mdo-rho0", **kw):
    base = dict(seed=11, replicates=6, imputations=5, mc_subjects=20_000)
    base.update(kw)
    return shipped_configs(name)[0].with_overrides(**base)


def test_run_scenario_shape():
    res = run_scenario(_cfg())
    assert len(res.rows) == 3 * 3
    assert len(res.records) == 6 * 3 * 3
    row = res.row("tim", "P")
    assert row.replicates == 6
    assert math.isnan(res.row("direct-ml", "P").cp)
    assert res.estimates("nim-mean", "E-P").shape == (6,)


def _same(a, b):
    return np.array_equal(
        np.array([astuple(r)[3:] for r in a], dtype=float),
        np.array([astuple(r)[3:] for r in b], dtype=float),
        equal_nan=True,
    ) and [astuple(r)[:3] for r in a] == [astuple(r)[:3] for r in b]


def test_thread_count_does_not_change_output():
    cfg = _cfg(replicates=5, bootstrap=4, methods=("nim-mean",))
    one = run_scenario(cfg, threads=1)
    two = run_scenario(cfg, threads=2, truth=one.truth)
    assert emit_table(one.rows)[0] == emit_table(two.rows)[0]
    assert _same(one.records, two.records)


def test_replicate_is_order_independent():
    cfg = _cfg()
    a = run_replicate(cfg, 3)
    run_replicate(cfg, 0)
    assert _same(run_replicate(cfg, 3), a)


def test_missing_seed_is_an_error():
    with pytest.raises(SimulationError):
        run_scenario(shipped_configs("table2-k1-mdo-rho0")[0].with_overrides(replicates=2))


def test_too_many_failures_abort():
    # five subjects per arm rarely leave enough completers for the regressions
    cfg = _cfg(replicates=20, methods=("nim-mean",))
    cfg = cfg.with_overrides(arms=tuple(type(a)(a.label, 5, a.means, a.cov) for a in cfg.arms))
    with pytest.raises(SimulationError):
        run_scenario(cfg)


def test_emit_table_round_trip(tmp_path):
    res = run_scenario(_cfg(replicates=3))
    csv_text, text = emit_table(res.rows, tmp_path / "t")
    assert (tmp_path / "t.csv").read_text() == csv_text
    assert (tmp_path / "t.txt").read_text() == text
    back = metrics_from_records(read_table_csv(tmp_path / "t.csv"))
    for a, b in zip(back, res.rows):
        for f in ("bias", "sd_of_estimates", "mean_se", "true_value"):
            x, y = getattr(a, f), getattr(b, f)
            assert (math.isnan(x) and math.isnan(y)) or x == y
    with pytest.raises(ValueError):
        emit_table([])


def test_missingness_rows():
    rows = missingness_rows([_cfg()])
    rec = rows[0].as_record()
    assert set(rec) >= {"scenario", "K", "p_missing_P", "p_missing_E"}
    assert 0.25 < rec["p_missing_P"] < 0.35


def test_cli_simulate_is_byte_identical(tmp_path, capsys):
    cfg = SCENARIOS / "table4-k1-mdo.toml"
    args = ["simulate", str(cfg), "--seed", "3", "-R", "2", "-m", "3", "-B", "3"]
    assert main(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("table4-k1-mdo.csv", "table4-k1-mdo.txt", "table4-k1-mdo_replicates.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "np.float64" not in (tmp_path / "a" / "table4-k1-mdo_replicates.csv").read_text()


def test_cli_simulate_single_replicate_is_fast(tmp_path):
    cfg = SCENARIOS / "table3-k5-mdo-rho0.toml"
    t0 = time.perf_counter()
    rc = main(["simulate", str(cfg), "--seed", "1", "-R", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert time.perf_counter() - t0 < 5.0


def test_cli_impute_then_analyze(small_trial, tmp_path, capsys):
    from rtbmi.io import write_dataset_csv

    data = tmp_path / "d.csv"
    write_dataset_csv(small_trial, data)
    comp = tmp_path / "c.csv"
    assert main(["impute", str(data), "--method", "nim-mean", "-m", "4", "--seed", "2", "--out", str(comp)]) == 0
    out = tmp_path / "r.csv"
    assert main(["analyze", str(comp), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("scenario,method,quantity,point")
    assert [ln.split(",")[2] for ln in lines[1:]] == ["P", "E", "E-P"]


def test_cli_truth(capsys):
    assert main(["truth", str(SCENARIOS / "table2-k1-mdo-rho0.toml"), "--mc-subjects", "20000"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "quantity,pi,mu_delta_y,truth"
    assert len(out) == 4


def test_cli_tables(tmp_path, capsys):
    rc = main(["tables", "--paper", "--table", "1", "--out", str(tmp_path)])
    assert rc == 0
    rows = read_table_csv(tmp_path / "table1.csv")
    assert len(rows) == 8


def test_cli_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "x.toml", "--seed", "1", "--bogus"])
    assert info.value.code == 2


def test_cli_domain_error_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("name = 'x'\n")
    assert main(["simulate", str(bad), "--seed", "1"]) == 1
    assert "error" in capsys.readouterr().err
