"""Confusion statistics and the capacity-adjusted detection measure M-hat.

A classifier that flags more points than the budget b*pi0 allows cannot have
all of its flags processed; under random triage only a fraction
w = budget / positive_rate of them is, and the detection rate is discounted
accordingly. Rates whose denominator class is absent are reported as NaN
(an explicit undefined marker), never as a silent zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CapacitySpec


@dataclass(frozen=True)
class MetricReport:
    tp0: int            # true class 0, predicted 0
    fn0: int            # true class 0, predicted 1
    tn1: int            # true class 1, predicted 1
    fp1: int            # true class 1, predicted 0
    sensitivity: float  # tp0 / (tp0 + fn0), NaN if no class-0 rows
    specificity: float  # tn1 / (tn1 + fp1), NaN if no class-1 rows
    accuracy: float
    positive_rate: float  # fraction of rows predicted 0
    m_hat: float          # sensitivity * w
    w: float              # min(1, budget / positive_rate)

    @property
    def defined(self) -> bool:
        """True when m_hat is a number (some class-0 rows were present)."""
        return not math.isnan(self.m_hat)


def _as_labels(v, name: str) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    arr = arr.astype(np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1")
    return arr


def sensitivity_specificity(predictions, labels) -> tuple[float, float, float]:
    """(sensitivity, specificity, accuracy); NaN marks an absent class."""
    pred = _as_labels(predictions, "predictions")
    lab = _as_labels(labels, "labels")
    if pred.shape != lab.shape:
        raise ValueError(
            f"length mismatch: {pred.shape[0]} predictions vs {lab.shape[0]} labels")
    n0 = int((lab == 0).sum())
    n1 = lab.size - n0
    tp0 = int(((pred == 0) & (lab == 0)).sum())
    tn1 = int(((pred == 1) & (lab == 1)).sum())
    sens = tp0 / n0 if n0 else math.nan
    spec = tn1 / n1 if n1 else math.nan
    acc = (tp0 + tn1) / lab.size
    return sens, spec, acc


def evaluate(predictions, labels, cap: CapacitySpec) -> MetricReport:
    """Score predictions against labels under the capacity budget of ``cap``."""
    pred = _as_labels(predictions, "predictions")
    lab = _as_labels(labels, "labels")
    if pred.shape != lab.shape:
        raise ValueError(
            f"length mismatch: {pred.shape[0]} predictions vs {lab.shape[0]} labels")
    n = lab.size
    tp0 = int(((pred == 0) & (lab == 0)).sum())
    fn0 = int(((pred == 1) & (lab == 0)).sum())
    tn1 = int(((pred == 1) & (lab == 1)).sum())
    fp1 = int(((pred == 0) & (lab == 1)).sum())
    sens, spec, acc = sensitivity_specificity(pred, lab)
    positive_rate = (tp0 + fp1) / n
    if positive_rate > 0:
        w = min(1.0, cap.budget / positive_rate)
    else:
        w = 1.0
    m_hat = sens * w  # NaN propagates when sensitivity is undefined
    return MetricReport(tp0=tp0, fn0=fn0, tn1=tn1, fp1=fp1,
                        sensitivity=sens, specificity=spec, accuracy=acc,
                        positive_rate=positive_rate, m_hat=m_hat, w=w)
