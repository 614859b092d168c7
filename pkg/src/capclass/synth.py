"""Synthetic generators and exact oracles for the two study designs.

One-dimensional design: minority features are standard normal, majority
features are a unit-scale Cauchy shifted to mu. The density ratio
r(x) = f0(x)/f1(x) vanishes in both tails and has all critical points in
[-1, 1], so every super-level set {r > gamma} is a union of at most two
bounded intervals. Mixture masses over intervals are computed from the
normal and Cauchy CDFs (erf / arctan), which handles the slowly decaying
Cauchy tails exactly; root finding is a dense sign scan polished by Brent
bisection.

Two-dimensional design: minority uniform on an inner ellipse, majority
uniform on an outer ellipse containing it. The default outer ellipse has
ten times the inner area, so at pi0 = 1/11 the expected number of majority
points falling inside the minority support equals the minority count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .core import CapacitySpec, LabeledDataset, NumericalError, derive_rng

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class OneDimSpec:
    """Normal(0,1) minority vs Cauchy(mu, 1) majority with prior pi0."""

    mu: float
    pi0: float

    def __post_init__(self):
        if not (0.0 < self.pi0 < 1.0):
            raise ValueError(f"pi0 must be in (0, 1), got {self.pi0}")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0


def normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * x * x) / _SQRT_2PI


def normal_cdf(x):
    return ndtr(np.asarray(x, dtype=np.float64))


def cauchy_pdf(x, mu: float):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (math.pi * (1.0 + (x - mu) ** 2))


def cauchy_cdf(x, mu: float):
    x = np.asarray(x, dtype=np.float64)
    return np.arctan(x - mu) / math.pi + 0.5


def _log_ratio(x, mu: float):
    """log f0(x) - log f1(x); finite for all finite x."""
    x = np.asarray(x, dtype=np.float64)
    return (-0.5 * x * x - math.log(_SQRT_2PI)
            + np.log(math.pi) + np.log1p((x - mu) ** 2))


def _max_log_ratio(mu: float) -> tuple[float, float]:
    """(argmax, max) of the log density ratio; the max sits in [-1, 1]."""
    res = optimize.minimize_scalar(lambda x: -_log_ratio(x, mu),
                                   bounds=(-1.5, 1.5), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.x), float(-res.fun)


def mu_c(pi0: float) -> float:
    """Shift at which pi0*f0 = pi1*f1 is tangent (has a unique solution).

    Below this value the Bayes rule labels everything as the majority
    class.
    """
    if not (0.0 < pi0 < 0.5):
        raise ValueError(f"pi0 must be in (0, 0.5), got {pi0}")
    target = math.log((1.0 - pi0) / pi0)

    def excess(mu):
        return _max_log_ratio(mu)[1] - target

    lo, hi = 0.5, 8.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise NumericalError("mu_c bracketing failed")
    if excess(lo) > 0:
        raise NumericalError("mu_c lower bracket failed")
    return float(optimize.brentq(excess, lo, hi, xtol=1e-9, rtol=1e-12))


def regions_for_gamma(spec: OneDimSpec, gamma: float) -> list[tuple[float, float]]:
    """Super-level set {x : f0(x) > gamma * f1(x)} as a list of intervals."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        return [(-math.inf, math.inf)]
    log_gamma = math.log(gamma)
    _, peak = _max_log_ratio(spec.mu)
    if peak <= log_gamma:
        return []
    # all crossings live where the ratio is above its tail decay; the ratio
    # is increasing left of -1 and decreasing right of +1, so scan a wide
    # bracket and polish each sign change
    lo, hi = -60.0, spec.mu + 60.0
    while _log_ratio(lo, spec.mu) >= log_gamma:
        lo *= 2.0
    while _log_ratio(hi, spec.mu) >= log_gamma:
        hi *= 2.0
    grid = np.linspace(lo, hi, 20001)
    vals = _log_ratio(grid, spec.mu) - log_gamma
    sign = vals > 0
    change = np.flatnonzero(sign[1:] != sign[:-1])
    roots = [float(optimize.brentq(lambda x: _log_ratio(x, spec.mu) - log_gamma,
                                   grid[i], grid[i + 1], xtol=1e-13, rtol=8.9e-16))
             for i in change]
    if len(roots) % 2 != 0:
        raise NumericalError(f"unpaired region boundaries at gamma={gamma}")
    return [(roots[i], roots[i + 1]) for i in range(0, len(roots), 2)]


def _interval_mass(cdf, intervals) -> float:
    return float(sum(cdf(hi) - cdf(lo) for lo, hi in intervals))


def p_gamma(spec: OneDimSpec, gamma: float,
            intervals: list[tuple[float, float]] | None = None) -> float:
    """Mixture probability of the super-level set at ``gamma``."""
    if intervals is None:
        intervals = regions_for_gamma(spec, gamma)
    mass0 = _interval_mass(normal_cdf, intervals)
    mass1 = _interval_mass(lambda x: cauchy_cdf(x, spec.mu), intervals)
    return spec.pi0 * mass0 + spec.pi1 * mass1


def analytic_gamma_star(spec: OneDimSpec, cap: CapacitySpec,
                        ) -> tuple[float, list[tuple[float, float]]]:
    """Solve P_gamma = budget for gamma and return the optimal region.

    The returned region's mixture mass matches the budget to within 1e-6.
    """
    budget = cap.budget
    if not (0.0 < budget <= 1.0):
        raise ValueError(f"budget must be in (0, 1], got {budget}")
    if budget >= 1.0:
        return 0.0, [(-math.inf, math.inf)]
    _, peak = _max_log_ratio(spec.mu)
    gamma_hi = math.exp(peak)  # above the ratio's maximum the region is empty

    def excess(gamma):
        return p_gamma(spec, gamma) - budget

    gamma_lo = 1e-12
    if excess(gamma_lo) < 0:
        raise NumericalError("gamma bracketing failed at the permissive end")
    gamma_star = float(optimize.brentq(excess, gamma_lo, gamma_hi,
                                       xtol=1e-14, rtol=8.9e-16))
    intervals = regions_for_gamma(spec, gamma_star)
    residual = abs(p_gamma(spec, gamma_star, intervals) - budget)
    if residual > 1e-6:
        raise NumericalError(f"gamma_star residual {residual:.3e} exceeds 1e-6")
    return gamma_star, intervals


def analytic_bayes_region(spec: OneDimSpec) -> list[tuple[float, float]]:
    """Region where the Bayes rule predicts the minority class.

    Empty whenever mu < mu_c(pi0); otherwise the interval between the two
    crossings of pi0*f0 = pi1*f1.
    """
    return regions_for_gamma(spec, spec.pi1 / spec.pi0)


def region_contains(intervals, x) -> np.ndarray:
    """Vectorized membership test for a list of disjoint intervals."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape, dtype=bool)
    for lo, hi in intervals:
        out |= (x > lo) & (x < hi)
    return out


def rule_metrics(spec: OneDimSpec, intervals, cap: CapacitySpec) -> dict:
    """Population metrics of the rule 'predict 0 on these intervals'."""
    sens = _interval_mass(normal_cdf, intervals)
    fpr = _interval_mass(lambda x: cauchy_cdf(x, spec.mu), intervals)
    positive_rate = spec.pi0 * sens + spec.pi1 * fpr
    specificity = 1.0 - fpr
    accuracy = spec.pi0 * sens + spec.pi1 * specificity
    w = min(1.0, cap.budget / positive_rate) if positive_rate > 0 else 1.0
    return {
        "sensitivity": sens,
        "specificity": specificity,
        "accuracy": accuracy,
        "positive_rate": positive_rate,
        "m": sens * w,
    }


def gen_1d(spec: OneDimSpec, n: int, seed: int) -> LabeledDataset:
    """n iid draws: label ~ Bernoulli(pi0), X | 0 ~ N(0,1), X | 1 ~ Cauchy(mu)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = derive_rng(seed, "gen1d")
    labels = (rng.random(n) >= spec.pi0).astype(np.int64)  # 0 w.p. pi0
    x = np.empty(n)
    n0 = int((labels == 0).sum())
    x[labels == 0] = rng.standard_normal(n0)
    x[labels == 1] = spec.mu + rng.standard_cauchy(n - n0)
    return LabeledDataset(x[:, None], labels)


@dataclass(frozen=True)
class EllipseSpec:
    """Uniform inner-ellipse minority inside a uniform outer-ellipse majority."""

    inner_axes: tuple[float, float]
    outer_axes: tuple[float, float]
    n0: int
    pi0: float

    def __post_init__(self):
        a0x, a0y = self.inner_axes
        a1x, a1y = self.outer_axes
        if min(a0x, a0y, a1x, a1y) <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        if not (a0x < a1x and a0y < a1y):
            raise ValueError("inner ellipse must be strictly contained in the outer")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if not (0.0 < self.pi0 < 1.0):
            raise ValueError(f"pi0 must be in (0, 1), got {self.pi0}")


def default_ellipse_spec(n0: int = 100, pi0: float = 1.0 / 11.0) -> EllipseSpec:
    # unit inner disk; outer area 10x the inner, so majority density times
    # inner area equals n0 exactly at pi0 = 1/11
    r = math.sqrt(10.0)
    return EllipseSpec(inner_axes=(1.0, 1.0), outer_axes=(r, r), n0=n0, pi0=pi0)


def _uniform_in_ellipse(rng: np.random.Generator, n: int, axes) -> np.ndarray:
    ax, ay = axes
    pts = np.empty((n, 2))
    filled = 0
    while filled < n:
        cand = rng.uniform(-1.0, 1.0, size=(2 * (n - filled) + 8, 2))
        keep = cand[(cand ** 2).sum(axis=1) <= 1.0]
        take = min(len(keep), n - filled)
        pts[filled:filled + take] = keep[:take]
        filled += take
    return pts * np.array([ax, ay])


def gen_ellipses(spec: EllipseSpec, seed: int) -> LabeledDataset:
    """n0 minority points in the inner ellipse plus the implied majority draw."""
    n1 = int(round(spec.n0 * (1.0 - spec.pi0) / spec.pi0))
    rng = derive_rng(seed, "ellipses")
    x0 = _uniform_in_ellipse(rng, spec.n0, spec.inner_axes)
    x1 = _uniform_in_ellipse(rng, n1, spec.outer_axes)
    features = np.vstack([x0, x1])
    labels = np.concatenate([np.zeros(spec.n0, np.int64), np.ones(n1, np.int64)])
    perm = rng.permutation(len(labels))
    return LabeledDataset(features[perm], labels[perm])
