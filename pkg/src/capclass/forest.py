"""Random forest of CART trees with soft votes and budget thresholding.

Trees are grown by greedy Gini reduction over mtry features sampled per
split; candidate thresholds are midpoints between consecutive distinct
sorted values, and equal-gain ties resolve to the smallest (feature index,
threshold) pair, so growth is deterministic given the seed stream. Each
leaf stores the class-0 fraction of the training rows reaching it and the
forest score is the plain mean of those fractions over trees. The
unadapted classifier cuts the score at 1/2; the capacity classifier cuts
it at the calibrated budget threshold, which is the same rule family with
the cut shifted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .calib import CalibratedClassifier, calibrate_threshold
from .core import CapacitySpec, LabeledDataset, derive_seed


@njit(cache=True)
def _grow_tree(x, y0, idx, max_depth, min_leaf, mtry, seed):
    n = idx.shape[0]
    d = x.shape[1]
    max_nodes = 4 * (n // min_leaf + 2)
    feat = np.full(max_nodes, -1, np.int64)
    thr = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)
    np.random.seed(seed)

    work = idx.copy()
    stack_node = np.zeros(max_nodes, np.int64)
    stack_lo = np.zeros(max_nodes, np.int64)
    stack_hi = np.zeros(max_nodes, np.int64)
    stack_depth = np.zeros(max_nodes, np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    vals = np.empty(n, np.float64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        m = hi - lo
        c0 = 0
        for i in range(lo, hi):
            c0 += y0[work[i]]
        value[node] = c0 / m
        if depth >= max_depth or m < 2 * min_leaf or c0 == 0 or c0 == m:
            continue
        cand = np.random.permutation(d)[:mtry]
        cand.sort()
        parent_gini = 1.0 - (c0 / m) ** 2 - ((m - c0) / m) ** 2
        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        for fj in range(cand.shape[0]):
            f = cand[fj]
            for i in range(m):
                vals[i] = x[work[lo + i], f]
            order = np.argsort(vals[:m], kind="mergesort")
            nl0 = 0
            for pos in range(m - 1):
                o = order[pos]
                nl0 += y0[work[lo + o]]
                v_here = vals[o]
                v_next = vals[order[pos + 1]]
                if v_here == v_next:
                    continue
                nl = pos + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                nr0 = c0 - nl0
                gl = 1.0 - (nl0 / nl) ** 2 - ((nl - nl0) / nl) ** 2
                gr = 1.0 - (nr0 / nr) ** 2 - ((nr - nr0) / nr) ** 2
                gain = parent_gini - (nl * gl + nr * gr) / m
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = 0.5 * (v_here + v_next)
        if best_f < 0:
            continue
        tmp = work[lo:hi].copy()
        n_left = 0
        for i in range(m):
            if x[tmp[i], best_f] <= best_t:
                n_left += 1
        a = lo
        b = lo + n_left
        for i in range(m):
            if x[tmp[i], best_f] <= best_t:
                work[a] = tmp[i]
                a += 1
            else:
                work[b] = tmp[i]
                b += 1
        feat[node] = best_f
        thr[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        for child, c_lo, c_hi in ((n_nodes, lo, lo + n_left),
                                  (n_nodes + 1, lo + n_left, hi)):
            stack_node[top] = child
            stack_lo[top] = c_lo
            stack_hi[top] = c_hi
            stack_depth[top] = depth + 1
            top += 1
        n_nodes += 2
    return (feat[:n_nodes], thr[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes])


@njit(cache=True)
def _tree_apply(x, feat, thr, left, right, value, out):
    for i in range(x.shape[0]):
        node = 0
        while feat[node] >= 0:
            if x[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@njit(cache=True)
def _bootstrap_indices(n, seed):
    np.random.seed(seed)
    return np.random.randint(0, n, n)


@dataclass(frozen=True)
class TreeModel:
    """Flat binary tree: feature[i] < 0 marks node i as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # per-node class-0 fraction

    def apply(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(points.shape[0])
        _tree_apply(points, self.feature, self.threshold, self.left,
                    self.right, self.value, out)
        return out

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    mtry: int
    min_leaf: int
    max_depth: int
    bootstrap: bool
    seed: int
    d: int

    def minority_score(self, points: np.ndarray) -> np.ndarray:
        return forest_score(self, points)


def fit_forest(train: LabeledDataset, b_trees: int = 200,
               mtry: int | None = None, min_leaf: int = 5,
               max_depth: int = 20, bootstrap: bool = True,
               seed: int = 0) -> ForestModel:
    """Grow ``b_trees`` CART trees on (bootstrap resamples of) the train fold."""
    if b_trees < 1:
        raise ValueError("b_trees must be >= 1")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    if mtry is None:
        mtry = math.ceil(math.sqrt(train.d))
    if not (1 <= mtry <= train.d):
        raise ValueError(f"mtry must be in [1, {train.d}], got {mtry}")
    x = np.ascontiguousarray(train.features)
    y0 = (train.labels == 0).astype(np.int64)
    base = np.arange(train.n, dtype=np.int64)
    trees = []
    for t in range(b_trees):
        tree_seed = derive_seed(seed, "tree", t) % (2 ** 31 - 1)
        if bootstrap:
            idx = _bootstrap_indices(train.n, tree_seed)
        else:
            idx = base
        arrays = _grow_tree(x, y0, idx.astype(np.int64), max_depth, min_leaf,
                            mtry, tree_seed)
        trees.append(TreeModel(*arrays))
    return ForestModel(trees=tuple(trees), mtry=mtry, min_leaf=min_leaf,
                       max_depth=max_depth, bootstrap=bootstrap, seed=seed,
                       d=train.d)


def forest_score(model: ForestModel, points: np.ndarray) -> np.ndarray:
    """Mean leaf class-0 fraction over the trees, in [0, 1]."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[1] != model.d:
        raise ValueError(f"expected d={model.d} features, got {pts.shape[1]}")
    pts = np.ascontiguousarray(pts)
    out = np.zeros(pts.shape[0])
    for tree in model.trees:
        _tree_apply(pts, tree.feature, tree.threshold, tree.left, tree.right,
                    tree.value, out)
    return out / len(model.trees)


def fit_capacity_forest(train: LabeledDataset, calib: LabeledDataset,
                        cap: CapacitySpec, **forest_params,
                        ) -> CalibratedClassifier:
    """Forest scorer with the vote cut calibrated on a disjoint fold."""
    model = fit_forest(train, **forest_params)
    scores = forest_score(model, calib.features)
    return CalibratedClassifier(model, calibrate_threshold(scores, cap))


def classical_forest_classifier(model: ForestModel) -> CalibratedClassifier:
    """Majority soft vote: minority iff the mean vote exceeds 1/2."""
    return CalibratedClassifier(model, 0.5)
