"""Shared fixtures: a deterministic credit-like surrogate source table.

The real credit-default benchmark is not bundled, so harness-level tests
run against a synthetic stand-in with the same shape: 25,000 rows, 5,529
of them minority (22.12%), ten numeric covariates of which six carry
signal (two only weakly) and two are ordinal codes. The separation is
calibrated so that score-ranking methods are informative while majority
voting at the usual cut almost never flags the minority, mirroring the
behavior of the real benchmark under severe resampled imbalance.
"""

import csv
from pathlib import Path

import numpy as np
import pytest

from capclass.core import LabeledDataset
from capclass.ingest import CsvSchema, load_csv

FIXTURES = Path(__file__).parent / "fixtures"

SURROGATE_N = 25_000
SURROGATE_N_MINORITY = 5_529
SURROGATE_SHIFT = 0.65


def make_surrogate_source(seed: int = 20_251_109) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    n, d = SURROGATE_N, 10
    x = rng.normal(size=(n, d))
    labels = np.ones(n, np.int64)
    labels[rng.choice(n, size=SURROGATE_N_MINORITY, replace=False)] = 0
    is0 = labels == 0
    x[is0, :4] += SURROGATE_SHIFT
    x[is0, 4:6] += SURROGATE_SHIFT / 2.0
    # two ordinal credit-code style columns, uninformative
    x[:, 8] = np.floor(np.clip(x[:, 8] + 3.0, 0.0, 6.0))
    x[:, 9] = np.floor(np.clip(x[:, 9] + 3.0, 0.0, 6.0))
    return LabeledDataset(x, labels)


@pytest.fixture(scope="session")
def surrogate_csv(tmp_path_factory):
    """The surrogate source written as a loader-compatible CSV file."""
    data = make_surrogate_source()
    path = tmp_path_factory.mktemp("data") / "credit_surrogate.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"X{j + 1}" for j in range(data.d)]
                        + ["default payment next month"])
        for i in range(data.n):
            writer.writerow([repr(v) for v in data.features[i]]
                            + [1 - data.labels[i]])  # default=1 maps to class 0
    return path


@pytest.fixture(scope="session")
def surrogate_source(surrogate_csv):
    return load_csv(surrogate_csv, CsvSchema())


@pytest.fixture(scope="session")
def golden_oracle_rows():
    """Frozen analytic oracle values (cross-checked by MC when generated)."""
    with open(FIXTURES / "golden_1d_oracle.csv", newline="") as fh:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(fh)]
