"""Wide-format CSV exchange for trial and completed datasets.

Columns are ``subject_id, arm, y0, ..., yK`` (plus ``imputation_m`` for
completed data).  Missing cells are empty fields.  Floats are written with
``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv
from typing import Iterable, Sequence

import numpy as np

from .datagen import ArmData, TrialDataset

__all__ = [
    "write_dataset_csv",
    "read_dataset_csv",
    "write_completed_csv",
    "read_completed_csv",
]


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def _open(dest, mode):
    if hasattr(dest, "write") or hasattr(dest, "read"):
        return dest, False
    return open(dest, mode, newline=""), True


def write_dataset_csv(dataset: TrialDataset, dest) -> None:
    fh, close = _open(dest, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "arm"] + [f"y{k}" for k in range(dataset.K + 1)])
        sid = 0
        for arm in dataset.arms:
            for row in arm.values:
                sid += 1
                w.writerow([sid, arm.label] + [_fmt(v) for v in row])
    finally:
        if close:
            fh.close()


def _read_rows(src) -> tuple[list[str], list[list[str]]]:
    fh, close = _open(src, "r")
    try:
        rows = list(csv.reader(fh))
    finally:
        if close:
            fh.close()
    if not rows:
        raise ValueError("CSV is empty; a header row is required")
    return rows[0], rows[1:]


def _visit_columns(header: Sequence[str]) -> list[int]:
    if header[:2] != ["subject_id", "arm"]:
        raise ValueError("CSV header must start with 'subject_id,arm'")
    cols = [i for i, h in enumerate(header) if h.startswith("y") and h[1:].isdigit()]
    expected = [f"y{k}" for k in range(len(cols))]
    if [header[i] for i in cols] != expected or len(cols) < 2:
        raise ValueError(f"visit columns must be y0..yK, got {[header[i] for i in cols]}")
    return cols


def _parse(cell: str) -> float:
    return float(cell) if cell.strip() else np.nan


def read_dataset_csv(src) -> TrialDataset:
    header, rows = _read_rows(src)
    cols = _visit_columns(header)
    arms: dict[str, list[list[float]]] = {}
    for line, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValueError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        arms.setdefault(row[1], []).append([_parse(row[i]) for i in cols])
    return TrialDataset(tuple(ArmData(label, np.array(v)) for label, v in arms.items()))


def write_completed_csv(completed: Iterable, dest) -> None:
    """Write completed datasets (see :class:`rtbmi.imputation.CompletedDataset`)."""
    completed = list(completed)
    if not completed:
        raise ValueError("nothing to write")
    K = completed[0].K
    fh, close = _open(dest, "w")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["subject_id", "arm"] + [f"y{k}" for k in range(K + 1)] + ["imputation_m"]
        )
        for cd in completed:
            sid = 0
            for label, values in zip(cd.labels, cd.arms):
                for row in values:
                    sid += 1
                    w.writerow([sid, label] + [_fmt(v) for v in row] + [cd.m])
    finally:
        if close:
            fh.close()


def read_completed_csv(src) -> list:
    """Read a completed-data CSV into one ``CompletedDataset`` per imputation.

    The original observation mask is not stored in the file, so the returned
    ``source_masks`` mark every non-empty cell as observed.
    """
    from .imputation import CompletedDataset

    header, rows = _read_rows(src)
    cols = _visit_columns(header)
    if header[-1] != "imputation_m":
        raise ValueError("completed-data CSV needs a trailing 'imputation_m' column")
    by_m: dict[int, dict[str, list]] = {}
    for line, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValueError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        m = int(row[-1])
        by_m.setdefault(m, {}).setdefault(row[1], []).append([_parse(row[i]) for i in cols])
    out = []
    for m, arms in sorted(by_m.items()):
        values = tuple(np.array(v) for v in arms.values())
        out.append(
            CompletedDataset(
                labels=tuple(arms),
                arms=values,
                source_masks=tuple(~np.isnan(v) for v in values),
                method="unknown",
                m=m,
            )
        )
    return out
