"""Real-data pipeline: CSV loading, label mapping, and imbalance resampling.

The loader takes whatever file it is given and reports the realized counts;
nothing about the source size is assumed. Defaulters (or whatever the
schema maps to the minority) become class 0. Resampling to a target
minority share is exact and without replacement; there is no silent
with-replacement fallback when a class runs short.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import (DataFormatError, InsufficientDataError, LabeledDataset,
                   derive_rng)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CsvSchema:
    """Column selection and label mapping for a delimited text file.

    Columns are referenced by header name or by zero-based index. Raw label
    values in ``minority_values`` map to class 0, those in
    ``majority_values`` to class 1; anything else is an error. The default
    matches the credit-default benchmark, where a recorded default (1) is
    the minority event.
    """

    label_column: str | int = "default payment next month"
    feature_columns: tuple | None = None  # None = all other columns
    minority_values: tuple = ("1",)
    majority_values: tuple = ("0",)
    has_header: bool = True


def _column_index(col, header: list[str] | None, path, kind: str) -> int:
    if isinstance(col, int):
        return col
    if header is None:
        raise DataFormatError(
            f"{path}: {kind} column {col!r} given by name but the schema "
            f"declares no header row")
    try:
        return header.index(col)
    except ValueError:
        raise DataFormatError(
            f"{path}: {kind} column {col!r} not found in header") from None


def load_csv(path, schema: CsvSchema = CsvSchema()) -> LabeledDataset:
    """Parse a CSV into a LabeledDataset under the given schema."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = None
    body_start = 0
    if schema.has_header:
        header = rows[0]
        body_start = 1
    if body_start >= len(rows):
        raise DataFormatError(f"{path}: no data rows")
    label_idx = _column_index(schema.label_column, header, path, "label")
    n_cols = len(rows[body_start])
    if schema.feature_columns is None:
        feat_idx = [j for j in range(n_cols) if j != label_idx]
    else:
        feat_idx = [_column_index(c, header, path, "feature")
                    for c in schema.feature_columns]

    def col_name(j):
        return header[j] if header and j < len(header) else f"column {j}"

    features = np.empty((len(rows) - body_start, len(feat_idx)))
    labels = np.empty(len(rows) - body_start, np.int64)
    for i, row in enumerate(rows[body_start:]):
        line_no = i + body_start + 1
        if len(row) != n_cols:
            raise DataFormatError(
                f"{path}: row {line_no} has {len(row)} fields, expected {n_cols}")
        raw = row[label_idx].strip()
        if raw in schema.minority_values:
            labels[i] = 0
        elif raw in schema.majority_values:
            labels[i] = 1
        else:
            raise DataFormatError(
                f"{path}: row {line_no}, {col_name(label_idx)}: unknown label "
                f"value {raw!r}")
        for jj, j in enumerate(feat_idx):
            try:
                v = float(row[j])
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {line_no}, {col_name(j)}: cannot parse "
                    f"{row[j]!r} as a number") from None
            if not np.isfinite(v):
                raise DataFormatError(
                    f"{path}: row {line_no}, {col_name(j)}: non-finite value")
            features[i, jj] = v
    data = LabeledDataset(features, labels)
    n0 = int((data.labels == 0).sum())
    log.info("loaded %s: n=%d, d=%d, minority=%d (%.2f%%)",
             path, data.n, data.d, n0, 100.0 * n0 / data.n)
    return data


def _resample_indices(labels: np.ndarray, pi0_target: float, n_total: int,
                      rng: np.random.Generator,
                      exclude: np.ndarray | None = None) -> np.ndarray:
    n0 = int(round(pi0_target * n_total))
    n1 = n_total - n0
    mask = np.ones(labels.shape[0], dtype=bool)
    if exclude is not None:
        mask[exclude] = False
    pool0 = np.flatnonzero((labels == 0) & mask)
    pool1 = np.flatnonzero((labels == 1) & mask)
    if n0 > pool0.size or n1 > pool1.size:
        raise InsufficientDataError(
            f"cannot draw {n0} minority / {n1} majority rows without "
            f"replacement: only {pool0.size} / {pool1.size} available")
    pick0 = rng.choice(pool0, size=n0, replace=False)
    pick1 = rng.choice(pool1, size=n1, replace=False)
    idx = np.concatenate([pick0, pick1])
    rng.shuffle(idx)
    return idx


def resample_to_pi0(data: LabeledDataset, pi0_target: float, n_total: int,
                    seed: int) -> LabeledDataset:
    """Exact-count draw: round(pi0 * n_total) minority rows, rest majority."""
    if not (0.0 < pi0_target < 1.0):
        raise ValueError(f"pi0_target must be in (0, 1), got {pi0_target}")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    rng = derive_rng(seed, "resample")
    idx = _resample_indices(data.labels, pi0_target, n_total, rng)
    return data.subset(idx)


@dataclass(frozen=True)
class FoldDraw:
    train: LabeledDataset
    test: LabeledDataset
    train_indices: np.ndarray
    test_indices: np.ndarray
    requested_test_size: int
    test_size: int  # lowered proportionally when the source runs short

    @property
    def shrunk(self) -> bool:
        return self.test_size != self.requested_test_size


def draw_train_test(data: LabeledDataset, pi0_target: float, n_train: int,
                    n_test: int, seed: int) -> FoldDraw:
    """Disjoint train and test draws at the same minority share.

    When the remaining rows cannot support the requested test size at this
    pi0, the test fold is shrunk to the largest feasible size and the
    change is recorded on the returned FoldDraw.
    """
    rng = derive_rng(seed, "folds")
    train_idx = _resample_indices(data.labels, pi0_target, n_train, rng)
    remaining0 = int((data.labels == 0).sum()) - int((data.labels[train_idx] == 0).sum())
    remaining1 = int((data.labels == 1).sum()) - int((data.labels[train_idx] == 1).sum())
    size = n_test
    while size > 0:
        k0 = int(round(pi0_target * size))
        if k0 <= remaining0 and size - k0 <= remaining1 and k0 >= 1:
            break
        size -= 1
    if size == 0:
        raise InsufficientDataError(
            f"no feasible test fold at pi0={pi0_target} after drawing "
            f"{n_train} training rows")
    if size != n_test:
        log.warning("test fold shrunk from %d to %d rows at pi0=%g",
                    n_test, size, pi0_target)
    test_idx = _resample_indices(data.labels, pi0_target, size, rng,
                                 exclude=train_idx)
    return FoldDraw(train=data.subset(train_idx), test=data.subset(test_idx),
                    train_indices=train_idx, test_indices=test_idx,
                    requested_test_size=n_test, test_size=size)


def write_fold_manifest(path, draw: FoldDraw, extra: dict | None = None) -> None:
    """JSON audit record of which source rows landed in which fold."""
    doc = {
        "train_indices": draw.train_indices.tolist(),
        "test_indices": draw.test_indices.tolist(),
        "requested_test_size": draw.requested_test_size,
        "test_size": draw.test_size,
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
