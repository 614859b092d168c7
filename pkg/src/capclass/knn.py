"""Capacity-constrained k-nearest-neighbor rules.

Two families live here. The weighted-vote rule reweights neighbor counts by
class weights (a0, 1-a0) and the capacity fit searches the (k, a0) grid for
the pair that detects the most calibration minorities while keeping the
flagged fraction within budget. The Gaussian-kernel rule scores a query by
the kernel-weighted minority fraction of its neighbors and is thresholded
either at the budget quantile (the post-hoc baseline) or at 1/2 (the
classical rule).

Neighbor sets are inclusive at the k-th distance: exact ties with the k-th
neighbor all enter the set, and vote denominators scale with the realized
set size. Brute-force search over the training rows is the reference; the
batched path below returns identical neighbor statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calib import CalibratedClassifier, calibrate_threshold
from .core import CapacitySpec, InfeasibleError, LabeledDataset

_CHUNK = 1024


def default_k_grid(n_train: int) -> np.ndarray:
    """Odd k values 1, 3, ..., 2*ceil(sqrt(n))+1, capped at n_train."""
    k_max = min(2 * math.ceil(math.sqrt(n_train)) + 1, n_train)
    return np.arange(1, k_max + 1, 2, dtype=np.int64)


def default_a0_grid() -> np.ndarray:
    """99 equispaced minority weights strictly inside (0, 1)."""
    return np.linspace(0.01, 0.99, 99)


def _sq_dists(queries: np.ndarray, train: np.ndarray) -> np.ndarray:
    sq = ((queries * queries).sum(axis=1)[:, None]
          + (train * train).sum(axis=1)[None, :]
          - 2.0 * queries @ train.T)
    np.clip(sq, 0.0, None, out=sq)
    return sq


def _neighbor_stats(queries: np.ndarray, train: np.ndarray,
                    labels: np.ndarray, k_values: np.ndarray,
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per query and per k: inclusive neighbor set size, minority count, and
    the k-th neighbor distance.

    Ties at the k-th distance are resolved by including every training row
    at that distance. Returns (sizes, minority_counts, kth_dist) arrays of
    shape (n_queries, len(k_values)).
    """
    k_values = np.asarray(k_values, dtype=np.int64)
    n_train = train.shape[0]
    if k_values.max() > n_train:
        raise ValueError(f"k={k_values.max()} exceeds {n_train} training rows")
    nq = queries.shape[0]
    sizes = np.empty((nq, len(k_values)), np.int64)
    counts = np.empty((nq, len(k_values)), np.int64)
    kdist = np.empty((nq, len(k_values)))
    is0 = (labels == 0).astype(np.int64)
    k_max = int(k_values.max())
    for lo in range(0, nq, _CHUNK):
        sq = _sq_dists(queries[lo:lo + _CHUNK], train)
        m = sq.shape[0]
        if k_max < n_train:
            part = np.argpartition(sq, k_max, axis=1)[:, :k_max + 1]
        else:
            part = np.broadcast_to(np.arange(n_train), (m, n_train))
        pd = np.take_along_axis(sq, part, axis=1)
        order = np.argsort(pd, axis=1, kind="stable")
        sd = np.take_along_axis(pd, order, axis=1)
        sl = np.take_along_axis(is0[part], order, axis=1)
        csum = np.cumsum(sl, axis=1)
        for j, k in enumerate(k_values):
            dk = sd[:, k - 1]
            kdist[lo:lo + m, j] = np.sqrt(dk)
            # inclusive set: everything with distance <= d_(k); detect ties
            # that spill past the partition window and fall back per row
            within = sd <= dk[:, None]
            sz = within.sum(axis=1)
            cnt = np.where(within, sl, 0).sum(axis=1)
            if k_max + 1 < n_train:
                spill = np.flatnonzero(sd[:, k_max] <= dk)
                for r in spill:
                    row = sq[r]
                    mask = row <= dk[r]
                    sz[r] = int(mask.sum())
                    cnt[r] = int(is0[mask].sum())
            sizes[lo:lo + m, j] = sz
            counts[lo:lo + m, j] = cnt
    return sizes, counts, kdist


@dataclass(frozen=True)
class WeightedKnnModel:
    """k-NN vote with class weights a0 for minority, 1-a0 for majority."""

    train: LabeledDataset
    k: int
    a0: float

    def __post_init__(self):
        if not (1 <= self.k <= self.train.n):
            raise ValueError(f"k must be in [1, {self.train.n}], got {self.k}")
        if not (0.0 < self.a0 < 1.0):
            raise ValueError(f"a0 must be in (0, 1), got {self.a0}")

    def predict(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        sizes, counts, _ = _neighbor_stats(
            pts, self.train.features, self.train.labels,
            np.array([self.k]))
        return _vote(sizes[:, 0], counts[:, 0], self.a0)


def _vote(sizes: np.ndarray, minority_counts: np.ndarray, a0: float) -> np.ndarray:
    """Label 0 iff a0 * (#class-0 neighbors) > (1 - a0) * (#class-1); ties -> 1."""
    m0 = a0 * minority_counts
    m1 = (1.0 - a0) * (sizes - minority_counts)
    return np.where(m0 > m1, 0, 1).astype(np.int64)


def weighted_knn_predict(model: WeightedKnnModel, x: np.ndarray) -> int:
    """Single-point form of the weighted vote."""
    return int(model.predict(np.atleast_2d(x))[0])


def fit_capacity_knn(train: LabeledDataset, calib: LabeledDataset,
                     cap: CapacitySpec, k_grid=None, a0_grid=None,
                     ) -> WeightedKnnModel:
    """Search (k, a0) for maximal calibration detections within budget.

    Ties are broken toward smaller a0, then smaller k. Raises
    InfeasibleError when no grid point keeps the calibration positive rate
    within budget.
    """
    k_grid = np.asarray(default_k_grid(train.n) if k_grid is None else k_grid,
                        dtype=np.int64)
    a0_grid = np.asarray(default_a0_grid() if a0_grid is None else a0_grid,
                         dtype=np.float64)
    if k_grid.size == 0 or a0_grid.size == 0:
        raise ValueError("k_grid and a0_grid must be nonempty")
    a0_grid = np.sort(a0_grid)
    k_grid = np.sort(k_grid)
    sizes, counts, _ = _neighbor_stats(calib.features, train.features,
                                       train.labels, k_grid)
    n_calib = calib.n
    max_sel = math.floor(cap.budget * n_calib)
    is0 = calib.labels == 0
    best = None  # (detected, a0, k)
    for j, k in enumerate(k_grid):
        for a0 in a0_grid:
            pred0 = _vote(sizes[:, j], counts[:, j], a0) == 0
            n_sel = int(pred0.sum())
            if n_sel > max_sel:
                break  # selection grows with a0; larger a0 stays infeasible
            detected = int((pred0 & is0).sum())
            if best is None or detected > best[0] \
                    or (detected == best[0] and (a0, k) < (best[1], best[2])):
                best = (detected, a0, int(k))
    if best is None:
        raise InfeasibleError(
            f"no (k, a0) grid point meets the budget {cap.budget:.6g} "
            f"on {n_calib} calibration rows")
    return WeightedKnnModel(train=train, k=best[2], a0=best[1])


def fit_classical_knn(train: LabeledDataset, calib: LabeledDataset,
                      k_grid=None) -> WeightedKnnModel:
    """Majority-vote k-NN (a0 = 1/2) with k chosen by calibration accuracy."""
    k_grid = np.asarray(default_k_grid(train.n) if k_grid is None else k_grid,
                        dtype=np.int64)
    sizes, counts, _ = _neighbor_stats(calib.features, train.features,
                                       train.labels, np.sort(k_grid))
    best = None  # (accuracy, -k) maximized
    for j, k in enumerate(np.sort(k_grid)):
        pred = _vote(sizes[:, j], counts[:, j], 0.5)
        acc = float((pred == calib.labels).mean())
        if best is None or acc > best[0]:
            best = (acc, int(k))
    return WeightedKnnModel(train=train, k=best[1], a0=0.5)


@dataclass(frozen=True)
class GaussianKnnModel:
    """Gaussian-kernel k-NN score: weighted minority fraction of neighbors.

    Weights are phi(d_j / h_x) with h_x the k-th neighbor distance. When
    h_x = 0 (the query coincides with at least k training rows) the score
    degrades to the unweighted minority fraction of the coincident points.
    """

    train: LabeledDataset
    k: int

    def __post_init__(self):
        if not (1 <= self.k <= self.train.n):
            raise ValueError(f"k must be in [1, {self.train.n}], got {self.k}")

    def minority_score(self, points: np.ndarray) -> np.ndarray:
        return gaussian_knn_eta(self, points)


def gaussian_knn_eta(model: GaussianKnnModel, points: np.ndarray) -> np.ndarray:
    """eta-hat(x) in [0, 1] for each query row."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    train = model.train.features
    labels = model.train.labels
    n_train = train.shape[0]
    k = model.k
    is0 = (labels == 0).astype(np.float64)
    out = np.empty(pts.shape[0])
    for lo in range(0, pts.shape[0], _CHUNK):
        sq = _sq_dists(pts[lo:lo + _CHUNK], train)
        m = sq.shape[0]
        if k < n_train:
            part = np.argpartition(sq, k, axis=1)[:, :k + 1]
        else:
            part = np.broadcast_to(np.arange(n_train), (m, n_train)).copy()
        pd = np.take_along_axis(sq, part, axis=1)
        order = np.argsort(pd, axis=1, kind="stable")
        sd = np.sqrt(np.take_along_axis(pd, order, axis=1))
        sl = np.take_along_axis(is0[part], order, axis=1)
        h = sd[:, k - 1]
        for r in range(m):
            if h[r] == 0.0:
                mask = sq[r] == 0.0
                out[lo + r] = is0[mask].mean()
                continue
            # inclusive neighbor set; ties beyond the window need the full row
            if k < n_train and sd[r, k] <= h[r]:
                dist = np.sqrt(sq[r])
                mask = dist <= h[r]
                w = np.exp(-0.5 * (dist[mask] / h[r]) ** 2)
                out[lo + r] = float((w * is0[mask]).sum() / w.sum())
            else:
                d_r = sd[r, :k]
                w = np.exp(-0.5 * (d_r / h[r]) ** 2)
                out[lo + r] = float((w * sl[r, :k]).sum() / w.sum())
    return out


def posthoc_knn(train: LabeledDataset, calib: LabeledDataset,
                cap: CapacitySpec, k: int) -> CalibratedClassifier:
    """Gaussian k-NN score cut at the budget quantile of the calibration fold."""
    model = GaussianKnnModel(train=train, k=k)
    scores = gaussian_knn_eta(model, calib.features)
    return CalibratedClassifier(model, calibrate_threshold(scores, cap))


def default_posthoc_k(n_train: int) -> int:
    """Odd k near sqrt(n): the conventional fixed choice for the baseline."""
    k = max(1, math.ceil(math.sqrt(n_train)))
    if k % 2 == 0:
        k += 1
    return min(k, n_train)
