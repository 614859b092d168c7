"""Soft-margin SVM scorer with capacity threshold adaptation.

The dual is solved by pairwise coordinate ascent with maximal-violating-pair
working-set selection, stopping when the KKT gap falls below the solver
tolerance. Internally the minority class is coded y = -1, matching the
convention that the raw decision score f(x) is negative on minority-like
points; the exported minority score is s(x) = -f(x) so that higher means
more minority-like and the shared budget calibration applies unchanged.

Features are standardized inside the module (training-fold mean/std) before
any kernel evaluation; the transform is stored on the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .calib import CalibratedClassifier, calibrate_threshold
from .core import CapacitySpec, LabeledDataset, NumericalError

_CHUNK = 2048


@njit(cache=True)
def _smo_solve(K, y, c, tol, max_iter):
    """Two-variable ascent on the SVM dual over a precomputed Gram matrix.

    Returns (alpha, offset, gap, iterations). B_i = y_i - sum_j alpha_j
    y_j K_ij is the per-point optimality score; the stopping gap is
    max(B over I_up) - min(B over I_low).
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    g = np.zeros(n)  # g_i = sum_j alpha_j y_j K_ij
    it = 0
    up_val = 0.0
    low_val = 0.0
    while True:
        up_val = -np.inf
        low_val = np.inf
        i_up = -1
        i_low = -1
        for i in range(n):
            b_i = y[i] - g[i]
            if (y[i] > 0 and alpha[i] < c) or (y[i] < 0 and alpha[i] > 0):
                if b_i > up_val:
                    up_val = b_i
                    i_up = i
            if (y[i] > 0 and alpha[i] > 0) or (y[i] < 0 and alpha[i] < c):
                if b_i < low_val:
                    low_val = b_i
                    i_low = i
        if up_val - low_val <= tol or it >= max_iter:
            break
        i = i_up
        j = i_low
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta < 1e-12:
            eta = 1e-12
        t = (up_val - low_val) / eta
        # alpha_i moves by +y_i t, alpha_j by -y_j t; clip to the box
        if y[i] > 0:
            t_max = c - alpha[i]
        else:
            t_max = alpha[i]
        if y[j] > 0:
            if alpha[j] < t_max:
                t_max = alpha[j]
        else:
            if c - alpha[j] < t_max:
                t_max = c - alpha[j]
        if t > t_max:
            t = t_max
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        for m in range(n):
            g[m] += t * (K[i, m] - K[j, m])
        it += 1
    offset = 0.5 * (up_val + low_val)
    return alpha, offset, up_val - low_val, it


def _rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = ((a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :]
          - 2.0 * a @ b.T)
    np.clip(sq, 0.0, None, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True)
class SvmModel:
    kernel: str                 # 'linear' or 'rbf'
    gamma: float                # rbf width; ignored for linear
    c: float
    alpha: np.ndarray           # dual coefficients on the stored rows
    y: np.ndarray               # internal +-1 codes (minority = -1)
    support: np.ndarray         # standardized training rows with alpha > 0
    support_alpha_y: np.ndarray
    offset: float
    feat_mean: np.ndarray
    feat_std: np.ndarray
    train_points: np.ndarray    # all standardized training rows (for KKT checks)
    gap: float

    def _standardize(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        return (pts - self.feat_mean) / self.feat_std

    def _kernel_block(self, q: np.ndarray) -> np.ndarray:
        if self.kernel == "rbf":
            return _rbf_kernel(q, self.support, self.gamma)
        return q @ self.support.T

    def decision(self, points: np.ndarray) -> np.ndarray:
        """Raw SVM score f(x); negative on the minority side."""
        q = self._standardize(points)
        out = np.empty(q.shape[0])
        for lo in range(0, q.shape[0], _CHUNK):
            out[lo:lo + _CHUNK] = (self._kernel_block(q[lo:lo + _CHUNK])
                                   @ self.support_alpha_y)
        return out + self.offset

    def minority_score(self, points: np.ndarray) -> np.ndarray:
        return -self.decision(points)


def _default_gamma(features: np.ndarray) -> float:
    d = features.shape[1]
    var = float(features.var(axis=0).mean())
    if var <= 0:
        var = 1.0
    return 1.0 / (d * var)


def fit_svm(train: LabeledDataset, kernel: str = "rbf", c: float = 1.0,
            gamma: float | None = None, solver_tol: float = 1e-3,
            max_iter: int = 1_000_000) -> SvmModel:
    """Fit the soft-margin dual on the training fold.

    The working-set strategy is deterministic, so no seed is consumed.
    Raises NumericalError (carrying the residual gap) if the iteration cap
    is reached before the KKT gap drops below ``solver_tol``.
    """
    if kernel not in ("linear", "rbf"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    n0 = int((train.labels == 0).sum())
    if n0 == 0 or n0 == train.n:
        raise ValueError("both classes must be present in the training fold")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    x = (train.features - mean) / std
    y = np.where(train.labels == 0, -1.0, 1.0)
    if gamma is None:
        gamma = _default_gamma(x)
    if kernel == "rbf":
        gram = _rbf_kernel(x, x, gamma)
    else:
        gram = x @ x.T
    alpha, offset, gap, iters = _smo_solve(gram, y, float(c),
                                           float(solver_tol), int(max_iter))
    if gap > solver_tol:
        raise NumericalError(
            f"SMO did not converge in {iters} iterations; KKT gap {gap:.3e} "
            f"exceeds tolerance {solver_tol:.3e}")
    sv = alpha > 0.0
    return SvmModel(kernel=kernel, gamma=float(gamma), c=float(c),
                    alpha=alpha, y=y, support=x[sv],
                    support_alpha_y=(alpha * y)[sv], offset=float(offset),
                    feat_mean=mean, feat_std=std, train_points=x, gap=float(gap))


def kkt_violation(model: SvmModel) -> float:
    """Largest KKT violation of the fitted dual over the training rows."""
    if model.kernel == "rbf":
        gram = _rbf_kernel(model.train_points, model.support, model.gamma)
    else:
        gram = model.train_points @ model.support.T
    f = gram @ model.support_alpha_y + model.offset
    margins = model.y * f
    alpha = model.alpha
    c = model.c
    viol = np.zeros_like(alpha)
    at_zero = alpha <= 0.0
    at_c = alpha >= c
    inside = ~at_zero & ~at_c
    viol[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    viol[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    viol[inside] = np.abs(1.0 - margins[inside])
    return float(viol.max())


def dual_objective(model: SvmModel) -> float:
    """Value of the dual objective at the fitted coefficients."""
    if model.kernel == "rbf":
        gram = _rbf_kernel(model.train_points, model.train_points, model.gamma)
    else:
        gram = model.train_points @ model.train_points.T
    ay = model.alpha * model.y
    return float(model.alpha.sum() - 0.5 * ay @ gram @ ay)


def fit_capacity_svm(train: LabeledDataset, calib: LabeledDataset,
                     cap: CapacitySpec, kernel: str = "rbf", c: float = 1.0,
                     gamma: float | None = None, solver_tol: float = 1e-3,
                     ) -> CalibratedClassifier:
    """SVM scorer with the decision threshold moved to meet the budget."""
    model = fit_svm(train, kernel=kernel, c=c, gamma=gamma,
                    solver_tol=solver_tol)
    scores = model.minority_score(calib.features)
    return CalibratedClassifier(model, calibrate_threshold(scores, cap))


def classical_svm_classifier(model: SvmModel) -> CalibratedClassifier:
    """The unadapted rule sign(f): minority iff f(x) < 0."""
    return CalibratedClassifier(model, 0.0)
