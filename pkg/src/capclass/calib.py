"""Budget calibration: turn any minority score into a feasible threshold.

Given calibration-fold scores and a budget, the threshold tau is the
(m+1)-th largest score with m = floor(budget * n). Points are flagged only
on a strict ``score > tau``, so ties sitting exactly at tau are excluded
and the realized calibration positive rate never exceeds the budget, while
the flagged set is the largest one any threshold can select feasibly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import CapacitySpec


class MinorityScorer(Protocol):
    """Anything exposing a per-row score, higher = more minority-like."""

    def minority_score(self, points: np.ndarray) -> np.ndarray: ...


def _check_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("scores must be 1-d")
    if s.size == 0:
        raise ValueError("scores are empty")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    return s


def calibrate_threshold(scores, cap: CapacitySpec) -> float:
    """Most permissive threshold whose calibration positive rate <= budget.

    Returns -inf when the budget already admits every point.
    """
    s = _check_scores(scores)
    budget = cap.budget
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    n = s.size
    m = math.floor(budget * n)
    if m >= n:
        return -math.inf
    # (m+1)-th largest value == element m of the descending order statistics
    return float(np.partition(s, n - 1 - m)[n - 1 - m])


def constrained_detection(scores, labels, cap: CapacitySpec) -> tuple[float, float]:
    """Calibrated threshold plus the joint detection rate it achieves.

    The second value is the fraction of calibration rows that are both
    flagged (score > tau) and truly minority.
    """
    s = _check_scores(scores)
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != s.shape:
        raise ValueError("scores and labels must have equal length")
    tau = calibrate_threshold(s, cap)
    p00 = float(((s > tau) & (lab == 0)).mean())
    return tau, p00


@dataclass(frozen=True)
class CalibrationDiagnostics:
    tau: float
    n_selected: int
    realized_rate: float
    n_ties_at_tau: int  # mass of the score atom sitting exactly at tau


def calibration_diagnostics(scores, cap: CapacitySpec) -> CalibrationDiagnostics:
    s = _check_scores(scores)
    tau = calibrate_threshold(s, cap)
    n_sel = int((s > tau).sum())
    return CalibrationDiagnostics(
        tau=tau,
        n_selected=n_sel,
        realized_rate=n_sel / s.size,
        n_ties_at_tau=int((s == tau).sum()),
    )


@dataclass(frozen=True)
class CalibratedClassifier:
    """A minority scorer plus a threshold; predicts 0 iff score > tau.

    tau = -inf flags every point (the b >= 1/pi0 limit); tau = +inf flags
    none (the b -> 0 limit).
    """

    scorer: MinorityScorer
    tau: float

    def scores(self, points: np.ndarray) -> np.ndarray:
        return self.scorer.minority_score(np.asarray(points, dtype=np.float64))

    def predict(self, points: np.ndarray) -> np.ndarray:
        s = self.scores(points)
        return np.where(s > self.tau, 0, 1).astype(np.int64)


def fit_calibrated(scorer: MinorityScorer, calib_points: np.ndarray,
                   cap: CapacitySpec) -> CalibratedClassifier:
    """Calibrate ``scorer`` on a held-out fold and wrap it as a classifier."""
    scores = scorer.minority_score(np.asarray(calib_points, dtype=np.float64))
    return CalibratedClassifier(scorer, calibrate_threshold(scores, cap))
