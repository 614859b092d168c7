"""SMOTE oversampling used to train the classical (unconstrained) baselines.

Synthetic minority rows are drawn on segments between a minority point and
one of its k nearest minority neighbors. Parent points cycle round-robin
through the minority rows so the synthetic count is exact: the augmented
minority count is round(original count * factor). Majority rows pass
through untouched.

The aggressive Appendix-style schedule maps the minority prior to an
oversampling factor by piecewise-linear interpolation between knots. At
its extreme knot (pi0 = 0.05%) the factor is large enough to lift the
post-augmentation minority share to roughly 9.5%.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledDataset, derive_rng


@dataclass(frozen=True)
class SmoteSchedule:
    """(pi0, factor) knots with linear interpolation and clamped output."""

    knots: tuple[tuple[float, float], ...]
    factor_min: float = 1.0
    factor_max: float = 20.0

    def __post_init__(self):
        if len(self.knots) < 1:
            raise ValueError("schedule needs at least one knot")
        ks = tuple(sorted((float(p), float(f)) for p, f in self.knots))
        object.__setattr__(self, "knots", ks)


# The nonlinear regime used for the robustness study: factor 4 at moderate
# imbalance, rising to ~210 at a 0.05% minority share, which is what takes
# the augmented minority fraction to about 9.5% there.
AGGRESSIVE_SCHEDULE = SmoteSchedule(
    knots=((0.0005, 210.0), (0.05, 4.0)),
    factor_max=210.0,
)


def schedule_factor(pi0: float, schedule: SmoteSchedule) -> float:
    """Interpolated oversampling factor for the given minority prior."""
    knots = schedule.knots
    ps = [p for p, _ in knots]
    if not (ps[0] <= pi0 <= ps[-1]):
        raise ValueError(
            f"pi0={pi0} outside the configured schedule range [{ps[0]}, {ps[-1]}]")
    fs = [f for _, f in knots]
    factor = float(np.interp(pi0, ps, fs))
    return float(min(max(factor, schedule.factor_min), schedule.factor_max))


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    factor: float | None = None
    schedule: SmoteSchedule | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.factor is None and self.schedule is None:
            raise ValueError("either factor or schedule must be given")
        if self.factor is not None and self.factor < 1.0:
            raise ValueError(f"factor must be >= 1, got {self.factor}")


def resolved_factor(cfg: SmoteConfig, pi0: float | None = None) -> float:
    """The factor to apply: the fixed one, or the schedule at ``pi0``."""
    if cfg.factor is not None:
        return float(cfg.factor)
    if pi0 is None:
        raise ValueError("pi0 is required to evaluate a schedule")
    return schedule_factor(pi0, cfg.schedule)


def smote_augment(train: LabeledDataset, cfg: SmoteConfig,
                  pi0: float | None = None) -> LabeledDataset:
    """Append synthetic minority rows to reach round(count0 * factor)."""
    factor = resolved_factor(cfg, pi0)
    minority = np.flatnonzero(train.labels == 0)
    count0 = minority.size
    if count0 < 2:
        raise ValueError("SMOTE needs at least 2 minority rows")
    if cfg.k_neighbors >= count0:
        raise ValueError(
            f"k_neighbors={cfg.k_neighbors} must be below the minority count {count0}")
    n_syn = int(round(count0 * factor)) - count0
    if n_syn == 0:
        return LabeledDataset(train.features, train.labels)

    pts = train.features[minority]
    sq = ((pts * pts).sum(axis=1)[:, None] + (pts * pts).sum(axis=1)[None, :]
          - 2.0 * pts @ pts.T)
    np.fill_diagonal(sq, np.inf)
    # k nearest minority neighbors per minority row, distance ties by index
    neighbor_idx = np.argsort(sq, axis=1, kind="stable")[:, :cfg.k_neighbors]

    rng = derive_rng(cfg.seed, "smote")
    parents = np.arange(n_syn) % count0
    choice = rng.integers(0, cfg.k_neighbors, size=n_syn)
    lam = rng.random(n_syn)
    base = pts[parents]
    other = pts[neighbor_idx[parents, choice]]
    synthetic = base + lam[:, None] * (other - base)

    features = np.vstack([train.features, synthetic])
    labels = np.concatenate([train.labels, np.zeros(n_syn, np.int64)])
    return LabeledDataset(features, labels)
