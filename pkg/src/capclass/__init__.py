"""Capacity-constrained classification for imbalanced data.

The positive-prediction rate of a classifier is bounded by a budget
b * pi0; within that budget, minority detection is maximized. Any model
that yields a minority score can be adapted by calibrating a threshold on
a held-out fold, and performance is judged by the capacity-adjusted
measure M-hat.
"""

from .calib import (CalibratedClassifier, calibrate_threshold,
                    constrained_detection, fit_calibrated)
from .core import (CapacitySpec, CapclassError, DataFormatError,
                   InfeasibleError, InsufficientDataError, InvalidConfigError,
                   LabeledDataset, NumericalError, SplitPlan, class_counts,
                   derive_rng, derive_seed, split)
from .metrics import MetricReport, evaluate, sensitivity_specificity

__all__ = [
    "CalibratedClassifier",
    "CapacitySpec",
    "CapclassError",
    "DataFormatError",
    "InfeasibleError",
    "InsufficientDataError",
    "InvalidConfigError",
    "LabeledDataset",
    "MetricReport",
    "NumericalError",
    "SplitPlan",
    "calibrate_threshold",
    "class_counts",
    "constrained_detection",
    "derive_rng",
    "derive_seed",
    "evaluate",
    "fit_calibrated",
    "sensitivity_specificity",
    "split",
]

__version__ = "0.1.0"
