"""Kernel density plug-in classifier with budget calibration.

Per-class densities are estimated on the training fold, the density-ratio
threshold gamma-hat is calibrated on a held-out fold, and prediction flags
a point as minority whenever f0(x) / f1(x) exceeds the threshold. Ratio
degeneracies are resolved so that the score stays totally ordered: 0/0
scores 0 (assign majority) and positive/0 scores +inf (always flagged
ahead of any finite score).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .calib import CalibratedClassifier, calibrate_threshold
from .core import CapacitySpec, LabeledDataset, SplitPlan, split

_CHUNK = 512  # query rows per evaluation block, bounds the distance buffer

KERNELS = ("gaussian", "epanechnikov")


def _kernel_profile(kernel: str, sq_dist: np.ndarray, d: int) -> np.ndarray:
    """Kernel value K(u) as a function of ||u||^2, normalized to integrate to 1."""
    if kernel == "gaussian":
        return np.exp(-0.5 * sq_dist) / (2.0 * math.pi) ** (d / 2.0)
    if kernel == "epanechnikov":
        # spherical: c_d (1 - ||u||^2)_+ with c_d = (d + 2) / (2 * V_d)
        v_d = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
        c_d = (d + 2.0) / (2.0 * v_d)
        return c_d * np.clip(1.0 - sq_dist, 0.0, None)
    raise ValueError(f"unknown kernel {kernel!r}, expected one of {KERNELS}")


@dataclass(frozen=True)
class KdeModel:
    """Per-class kernel density estimates sharing one bandwidth."""

    bandwidth: float
    kernel: str
    class0_points: np.ndarray
    class1_points: np.ndarray

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")

    @property
    def n10(self) -> int:
        return self.class0_points.shape[0]

    @property
    def n11(self) -> int:
        return self.class1_points.shape[0]

    @property
    def d(self) -> int:
        return self.class0_points.shape[1]

    def density(self, points: np.ndarray, cls: int) -> np.ndarray:
        """f-hat_cls evaluated at each query row."""
        pts = _check_points(points, self.d)
        train = self.class0_points if cls == 0 else self.class1_points
        h = self.bandwidth
        train_sq = (train * train).sum(axis=1)
        out = np.empty(pts.shape[0])
        for lo in range(0, pts.shape[0], _CHUNK):
            q = pts[lo:lo + _CHUNK]
            sq = (q * q).sum(axis=1)[:, None] + train_sq[None, :] - 2.0 * (q @ train.T)
            np.clip(sq, 0.0, None, out=sq)  # GEMM rounding can go slightly negative
            sq /= h * h
            out[lo:lo + _CHUNK] = _kernel_profile(self.kernel, sq, self.d).mean(axis=1)
        return out / h ** self.d

    def minority_score(self, points: np.ndarray) -> np.ndarray:
        return ratio_score(self, points)


def _check_points(points, d: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("query points contain non-finite values")
    return pts


def silverman_bandwidth(train: LabeledDataset) -> float:
    """Rule-of-thumb bandwidth: 1.06 * sigma * n_k^(-1/(d+4)), averaged over
    the coordinates of each class and then over the two classes.

    sigma is the robust spread min(std, IQR/1.349) per coordinate; the plain
    standard deviation diverges under heavy-tailed features.
    """
    d = train.d
    per_class = []
    for cls in (0, 1):
        pts = train.features[train.labels == cls]
        if len(pts) == 0:
            continue
        if len(pts) > 1:
            std = pts.std(axis=0, ddof=1)
            q75, q25 = np.percentile(pts, [75, 25], axis=0)
            iqr = q75 - q25
            sigma = np.where(iqr > 0, np.minimum(std, iqr / 1.349), std)
        else:
            sigma = np.zeros(d)
        per_class.append(np.mean(1.06 * sigma) * len(pts) ** (-1.0 / (d + 4)))
    h = float(np.mean(per_class))
    if h <= 0:
        raise ValueError("degenerate features: Silverman bandwidth is zero; "
                         "pass an explicit bandwidth")
    return h


def fit_kde(train: LabeledDataset, h: float | None = None,
            kernel: str = "gaussian") -> KdeModel:
    """Fit per-class density estimates on the training fold."""
    n0 = int((train.labels == 0).sum())
    if n0 == 0 or n0 == train.n:
        raise ValueError("both classes must be present in the training fold")
    if h is None:
        h = silverman_bandwidth(train)
    return KdeModel(bandwidth=float(h), kernel=kernel,
                    class0_points=train.features[train.labels == 0],
                    class1_points=train.features[train.labels == 1])


def ratio_score(model: KdeModel, points: np.ndarray) -> np.ndarray:
    """f0/f1 with the 0/0 -> 0 and positive/0 -> +inf conventions."""
    f0 = model.density(points, 0)
    f1 = model.density(points, 1)
    out = np.zeros_like(f0)
    pos = f1 > 0.0
    out[pos] = f0[pos] / f1[pos]
    out[~pos & (f0 > 0.0)] = math.inf
    return out


def fit_plugin_classifier(data: LabeledDataset, plan: SplitPlan,
                          cap: CapacitySpec, h: float | None = None,
                          kernel: str = "gaussian", seed: int = 0,
                          ) -> CalibratedClassifier:
    """Density fit on A1, ratio threshold calibrated on A2.

    The resulting classifier's tau is the plug-in estimate gamma-hat of the
    optimal density-ratio threshold.
    """
    if plan.n1 < 1 or plan.n2 < 1:
        raise ValueError("plug-in fit needs nonempty training and calibration parts")
    a1, a2, _ = split(data, plan, seed)
    model = fit_kde(a1, h=h, kernel=kernel)
    scores = ratio_score(model, a2.features)
    return CalibratedClassifier(model, calibrate_threshold(scores, cap))


def export_grid(model: KdeModel, tau: float, path, bounds=None,
                resolution: int = 50) -> None:
    """Write a d <= 3 evaluation grid as CSV (densities, score, label)."""
    d = model.d
    if d > 3:
        raise ValueError("grid export supports d <= 3 only")
    if bounds is None:
        all_pts = np.vstack([model.class0_points, model.class1_points])
        lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
        pad = 0.5 * (hi - lo) + model.bandwidth
        bounds = list(zip(lo - pad, hi + pad))
    axes = [np.linspace(b[0], b[1], resolution) for b in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    f0 = model.density(grid, 0)
    f1 = model.density(grid, 1)
    score = ratio_score(model, grid)
    label = np.where(score > tau, 0, 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(d)]
                        + ["f0_hat", "f1_hat", "score", "label"])
        for i in range(grid.shape[0]):
            writer.writerow([repr(v) for v in grid[i]]
                            + [repr(f0[i]), repr(f1[i]), repr(score[i]), label[i]])
