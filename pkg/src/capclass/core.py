"""Shared domain types: datasets, capacity budgets, splits, and seeding.

Class 0 is the minority/target class everywhere in this package. All
stochastic operations draw randomness through generators derived from a
single integer seed, so equal seeds give bit-identical results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


class CapclassError(Exception):
    """Base class for errors raised by this package."""


class InvalidConfigError(CapclassError):
    """A configuration value or combination of values is invalid."""


class DataFormatError(CapclassError):
    """Input data could not be parsed or violates the declared schema."""


class InsufficientDataError(CapclassError):
    """The source data cannot support the requested draw without replacement."""


class NumericalError(CapclassError):
    """A numerical routine failed to converge or found no feasible solution."""


class InfeasibleError(NumericalError):
    """No candidate in the searched class satisfies the capacity constraint."""


def _key_to_int(key) -> int:
    """Map a seed-stream key (int or str) to a stable 64-bit integer."""
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(seed: int, *keys) -> int:
    """Derive an independent child seed from a root seed and a key path.

    The mapping is a pure function of (seed, keys): the same path always
    yields the same child, and distinct paths yield independent streams.
    """
    # the path length disambiguates trailing-zero keys, which SeedSequence
    # entropy padding would otherwise collapse
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, len(keys)]
                                + [_key_to_int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0])


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """A fresh Generator for the stream named by ``keys`` under ``seed``."""
    return np.random.default_rng(derive_seed(seed, *keys))


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with binary labels; label 0 is the minority class."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {features.shape}")
        n, d = features.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {features.shape}")
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        if labels.shape != (n,):
            raise ValueError(
                f"labels must have shape ({n},), got {labels.shape}")
        labels = labels.astype(np.int64)
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must all be 0 or 1")
        features = features.copy()
        labels = labels.copy()
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[indices], self.labels[indices])


@dataclass(frozen=True)
class CapacitySpec:
    """The pair (b, pi0) bounding the positive-prediction rate at b * pi0."""

    b: float
    pi0: float

    def __post_init__(self):
        if not (0.0 < self.pi0 < 1.0):
            raise ValueError(f"pi0 must be in (0, 1), got {self.pi0}")
        if not (0.0 < self.b <= 1.0 / self.pi0):
            raise ValueError(
                f"b must satisfy 0 < b <= 1/pi0 = {1.0 / self.pi0:.6g}, got {self.b}")

    @property
    def budget(self) -> float:
        return self.b * self.pi0


@dataclass(frozen=True)
class SplitPlan:
    """Row counts for the training (A1), calibration (A2) and test (B) parts."""

    n1: int
    n2: int
    n3: int = 0

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.n1 + self.n2 + self.n3


def split(data: LabeledDataset, plan: SplitPlan, seed: int,
          ) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Partition ``data`` into disjoint A1/A2/B parts of the planned sizes.

    The row assignment is a seeded permutation; empty parts come back as
    None since LabeledDataset has no empty state.
    """
    if plan.total != data.n:
        raise ValueError(
            f"split plan sums to {plan.total} but dataset has {data.n} rows")
    perm = derive_rng(seed, "split").permutation(data.n)
    bounds = (plan.n1, plan.n1 + plan.n2, plan.total)
    parts = []
    lo = 0
    for hi in bounds:
        idx = perm[lo:hi]
        parts.append(data.subset(idx) if len(idx) else None)
        lo = hi
    return tuple(parts)


def class_counts(data: LabeledDataset) -> tuple[int, int]:
    """(number of minority rows, number of majority rows)."""
    count0 = int((data.labels == 0).sum())
    return count0, data.n - count0
