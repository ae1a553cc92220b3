"""Monte-Carlo driver: replicate, impute, analyze, aggregate.

Each replicate draws its data, imputations and bootstrap resamples from
streams keyed by ``(seed, purpose, replicate, method)``, so results do not
depend on how replicates are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rngs
from .config import ScenarioConfig
from .datagen import ScenarioTruth, generate_trial, true_rtb_mean
from .imputation import ImputationError
from .inference import BootstrapError, bootstrap_ci, estimate, quantities
from .methods import METHODS

__all__ = [
    "SimulationError",
    "MetricsRow",
    "MissingnessRow",
    "ReplicateRecord",
    "SimulationResult",
    "scenario_truth",
    "run_replicate",
    "run_scenario",
    "missingness_rows",
    "emit_table",
    "read_table_csv",
    "default_threads",
]

log = logging.getLogger(__name__)

THREADS_ENV = "RTBMI_THREADS"
MAX_FAIL_FRACTION = 0.01


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReplicateRecord:
    """Per-replicate output for one (method, quantity)."""

    replicate: int
    method: str
    quantity: str
    point: float
    se_rubin: float
    ci_lo: float
    ci_hi: float
    se_boot: float
    ci_boot_lo: float
    ci_boot_hi: float
    completed_mean: float
    completed_sd: float


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    method: str
    group: str
    completed_mean: float
    completed_sd: float
    true_value: float
    bias: float
    sd_of_estimates: float
    mean_se: float
    cp: float
    se_boot: float
    cp_boot: float
    replicates: int


@dataclass(frozen=True)
class MissingnessRow:
    scenario: str
    K: int
    mechanism: str
    alpha0: float
    alpha1: float
    p_missing: dict

    def as_record(self) -> dict:
        rec = {k: getattr(self, k) for k in ("scenario", "K", "mechanism", "alpha0", "alpha1")}
        rec.update({f"p_missing_{lab}": v for lab, v in self.p_missing.items()})
        return rec


@dataclass
class SimulationResult:
    config: ScenarioConfig
    truth: ScenarioTruth
    rows: list[MetricsRow]
    records: list[ReplicateRecord]
    failures: list[tuple[int, str]]

    def row(self, method: str, group: str) -> MetricsRow:
        for r in self.rows:
            if r.method == method and r.group == group:
                return r
        raise KeyError((method, group))

    def estimates(self, method: str, group: str) -> np.ndarray:
        return np.array([r.point for r in self.records if r.method == method and r.quantity == group])


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _require_seed(config: ScenarioConfig) -> int:
    if config.seed is None:
        raise SimulationError(f"scenario {config.name!r} has no seed")
    return config.seed


def scenario_truth(config: ScenarioConfig) -> ScenarioTruth:
    """Truth oracle for a scenario, from its own keyed stream."""
    seed = _require_seed(config)
    return true_rtb_mean(
        config.arms, config.missingness, config.mc_subjects, rngs.stream(seed, rngs.TRUTH)
    )


def run_replicate(config: ScenarioConfig, r: int) -> list[ReplicateRecord]:
    """Generate one dataset and run every configured method on it."""
    seed = _require_seed(config)
    nan = float("nan")
    trial = generate_trial(config.arms, config.missingness, rngs.stream(seed, rngs.DATA, r))
    names = quantities(trial.labels)
    out = []
    for method in config.methods:
        j = METHODS.index(method)
        pooled, stacks = estimate(
            trial, method, config.imputations, rngs.stream(seed, rngs.IMPUTE, r, j),
            config.alpha, config.pooled_baseline,
        )
        boot = {}
        if config.bootstrap:
            boot = bootstrap_ci(
                trial, method, config.bootstrap_imputations, config.bootstrap, config.alpha,
                rngs.stream(seed, rngs.BOOTSTRAP, r, j),
                point={q: pooled[q].point for q in names},
                pooled_baseline=config.pooled_baseline,
            )
        moments = {}
        if stacks is not None:
            for label, s in zip(trial.labels, stacks):
                final = s[:, :, -1]
                moments[label] = (float(final.mean(axis=1).mean()), float(final.std(axis=1, ddof=1).mean()))
        for q in names:
            p = pooled[q]
            b = boot.get(q)
            cm, csd = moments.get(q, (nan, nan))
            out.append(
                ReplicateRecord(
                    r, method, q, p.point, p.se, p.ci[0], p.ci[1],
                    b.se_b if b else nan,
                    b.ci_b[0] if b else nan,
                    b.ci_b[1] if b else nan,
                    cm, csd,
                )
            )
    return out


def _safe_replicate(args):
    config, r = args
    try:
        return r, run_replicate(config, r), None
    except (ImputationError, BootstrapError, np.linalg.LinAlgError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}"


def _mean(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(a.mean()) if a.size and not np.isnan(a).all() else float("nan")


def _aggregate(config: ScenarioConfig, truth: ScenarioTruth, records: list[ReplicateRecord]):
    rows = []
    for method in config.methods:
        for q in quantities(config.labels):
            recs = [x for x in records if x.method == method and x.quantity == q]
            est = np.array([x.point for x in recs])
            true = truth.value(q)
            lo = np.array([x.ci_lo for x in recs])
            hi = np.array([x.ci_hi for x in recs])
            blo = np.array([x.ci_boot_lo for x in recs])
            bhi = np.array([x.ci_boot_hi for x in recs])
            cp = float(np.mean((lo <= true) & (true <= hi))) if not np.isnan(lo).all() else float("nan")
            cpb = float(np.mean((blo <= true) & (true <= bhi))) if not np.isnan(blo).all() else float("nan")
            rows.append(
                MetricsRow(
                    scenario=config.name,
                    method=method,
                    group=q,
                    completed_mean=_mean([x.completed_mean for x in recs]),
                    completed_sd=_mean([x.completed_sd for x in recs]),
                    true_value=true,
                    bias=float(est.mean() - true),
                    sd_of_estimates=float(est.std(ddof=1)) if est.size > 1 else float("nan"),
                    mean_se=_mean([x.se_rubin for x in recs]),
                    cp=cp,
                    se_boot=_mean([x.se_boot for x in recs]),
                    cp_boot=cpb,
                    replicates=len(recs),
                )
            )
    return rows


def run_scenario(
    config: ScenarioConfig, threads: int | None = None, truth: ScenarioTruth | None = None
) -> SimulationResult:
    """Run all replicates of a scenario and aggregate them.

    ``threads`` worker processes share the replicates; ``None`` reads the
    ``RTBMI_THREADS`` environment variable.  Output is identical for any
    worker count.
    """
    _require_seed(config)
    threads = default_threads() if threads is None else max(1, int(threads))
    if truth is None:
        truth = scenario_truth(config)
    jobs = [(config, r) for r in range(config.replicates)]
    if threads == 1 or config.replicates == 1:
        results = [_safe_replicate(j) for j in jobs]
    else:
        chunk = max(1, config.replicates // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_safe_replicate, jobs, chunksize=chunk))
    results.sort(key=lambda t: t[0])

    records, failures = [], []
    for r, recs, err in results:
        if err is not None:
            log.warning("replicate %d failed: %s", r, err)
            failures.append((r, err))
        else:
            records.extend(recs)
    if len(failures) > MAX_FAIL_FRACTION * config.replicates:
        raise SimulationError(
            f"{len(failures)} of {config.replicates} replicates failed; first: {failures[0][1]}"
        )
    return SimulationResult(config, truth, _aggregate(config, truth, records), records, failures)


def missingness_rows(configs: Sequence[ScenarioConfig]) -> list[MissingnessRow]:
    """Proportion missing at the final visit per arm, one row per scenario."""
    rows = []
    for cfg in configs:
        truth = scenario_truth(cfg)
        m = cfg.missingness
        rows.append(
            MissingnessRow(
                cfg.name, cfg.K, m.mechanism, m.alpha0, m.alpha1,
                {lab: t.p_missing for lab, t in truth.arms.items()},
            )
        )
    return rows


# -- table output ---------------------------------------------------------------


def _records(rows) -> list[dict]:
    out = []
    for row in rows:
        if hasattr(row, "as_record"):
            out.append(row.as_record())
        elif isinstance(row, dict):
            out.append(dict(row))
        else:
            out.append(asdict(row))
    return out


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def _pretty(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{v:.3f}"
    return str(v)


def render_text(records: list[dict]) -> str:
    """Aligned text table; repeated leading scenario/method cells are blanked."""
    cols = list(records[0])
    body = []
    prev: list[str] = []
    for rec in records:
        line = [_pretty(rec[c]) for c in cols]
        key = [line[i] for i, c in enumerate(cols) if c in ("scenario", "method")]
        shown = list(line)
        for i in range(len(key)):
            if key[: i + 1] == prev[: i + 1]:
                shown[cols.index(("scenario", "method")[i])] = ""
        prev = key
        body.append(shown)
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    fmt = lambda cells: "  ".join(  # noqa: E731
        s.ljust(w) if i < 3 else s.rjust(w) for i, (s, w) in enumerate(zip(cells, widths))
    ).rstrip()
    rule = "-" * sum(widths + [2 * (len(cols) - 1)])
    return "\n".join([fmt(cols), rule] + [fmt(b) for b in body]) + "\n"


def emit_table(rows, destination=None) -> tuple[str, str]:
    """Render rows as CSV and as aligned text.

    With a ``destination`` path, writes ``<stem>.csv`` and ``<stem>.txt``
    next to it.  Returns ``(csv_text, text_table)``.
    """
    records = _records(rows)
    if not records:
        raise ValueError("no rows to emit")
    cols = list(records[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rec in records:
        w.writerow([_cell(rec[c]) for c in cols])
    csv_text = buf.getvalue()
    text = render_text(records)
    if destination is not None:
        dest = Path(destination)
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.with_suffix(".csv").write_text(csv_text)
        dest.with_suffix(".txt").write_text(text)
    return csv_text, text


def read_table_csv(src) -> list[dict]:
    """Read an emitted table back; numeric cells become floats (NaN if empty)."""
    text = Path(src).read_text() if not hasattr(src, "read") else src.read()
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {}
        for k, v in rec.items():
            try:
                row[k] = float(v) if v != "" else float("nan")
            except ValueError:
                row[k] = v
        out.append(row)
    return out


def metrics_from_records(records: list[dict]) -> list[MetricsRow]:
    names = [f.name for f in fields(MetricsRow)]
    return [
        MetricsRow(**{k: (int(r[k]) if k == "replicates" else r[k]) for k in names})
        for r in records
    ]
