import math

import numpy as np
import pytest

from capclass.calib import (CalibratedClassifier, calibrate_threshold,
                            calibration_diagnostics, constrained_detection,
                            fit_calibrated)
from capclass.core import CapacitySpec


def _cap(budget, pi0=0.1):
    return CapacitySpec(b=budget / pi0, pi0=pi0)


def _enumerate_best_feasible(scores, budget):
    """Oracle: try every realizable cut, keep the largest feasible flag set."""
    scores = np.asarray(scores, float)
    uniq = np.sort(np.unique(scores))
    cuts = np.concatenate(([-np.inf], uniq, (uniq[:-1] + uniq[1:]) / 2.0))
    best_set, best_size = None, -1
    for t in cuts:
        sel = scores > t
        if sel.mean() <= budget and sel.sum() > best_size:
            best_size = int(sel.sum())
            best_set = sel
    return best_set


class TestCalibrateThreshold:
    def test_order_statistic_example(self):
        scores = [0.95, 0.9, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05]
        tau = calibrate_threshold(scores, _cap(0.2))
        assert tau == 0.7
        selected = np.asarray(scores) > tau
        np.testing.assert_array_equal(np.flatnonzero(selected), [0, 1])
        # matches the exhaustive-enumeration oracle
        oracle = _enumerate_best_feasible(scores, 0.2)
        np.testing.assert_array_equal(selected, oracle)

    def test_matches_enumeration_oracle_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = int(rng.integers(1, 25))
            scores = np.round(rng.random(n), 2)  # induce ties
            budget = float(rng.uniform(0.05, 0.95))
            tau = calibrate_threshold(scores, _cap(budget))
            sel = scores > tau
            oracle = _enumerate_best_feasible(scores, budget)
            np.testing.assert_array_equal(sel, oracle)

    def test_unconstrained_budget_gives_sentinel(self):
        tau = calibrate_threshold([0.1, 0.2], CapacitySpec(b=2.0, pi0=0.5))
        assert tau == -math.inf

    def test_total_tie_selects_nothing(self):
        tau = calibrate_threshold([0.5] * 10, _cap(0.3))
        assert tau == 0.5
        assert (np.array([0.5] * 10) > tau).sum() == 0

    def test_tiny_budget_selects_nothing(self):
        scores = np.arange(10) / 10.0
        tau = calibrate_threshold(scores, _cap(0.05))  # floor(0.5) = 0
        assert tau == scores.max()
        assert (scores > tau).sum() == 0

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            calibrate_threshold([], _cap(0.2))

    def test_budget_monotonicity_and_nesting(self):
        rng = np.random.default_rng(11)
        scores = rng.normal(size=200)
        prev_tau = math.inf
        prev_sel = np.zeros(200, bool)
        for budget in (0.05, 0.1, 0.2, 0.4, 0.8):
            tau = calibrate_threshold(scores, _cap(budget))
            sel = scores > tau
            assert tau <= prev_tau
            assert (prev_sel & ~sel).sum() == 0  # nested selections
            prev_tau, prev_sel = tau, sel

    def test_monotone_transform_equivariance(self):
        rng = np.random.default_rng(12)
        scores = rng.normal(size=57)
        cap = _cap(0.25)
        base = scores > calibrate_threshold(scores, cap)
        for transform in (lambda s: 3.0 * s + 1.0, np.exp,
                          lambda s: np.arctan(s) ** 3):
            t = transform(scores)
            sel = t > calibrate_threshold(t, cap)
            np.testing.assert_array_equal(sel, base)

    def test_feasible_for_every_input(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            scores = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
            budget = float(rng.uniform(0.01, 1.0))
            cap = _cap(budget)
            tau = calibrate_threshold(scores, cap)
            assert (scores > tau).mean() <= budget + 1e-12

    def test_inf_scores_supported(self):
        scores = np.array([math.inf, math.inf, 1.0, 0.5])
        tau = calibrate_threshold(scores, _cap(0.5))
        assert tau == 1.0
        assert ((scores > tau).mean()) == 0.5


class TestConstrainedDetection:
    def test_perfect_separation_catches_all_minority(self):
        labels = np.array([0] * 3 + [1] * 7)
        scores = np.array([9.0, 8.0, 7.0] + list(range(7)))
        tau, p00 = constrained_detection(scores, labels, _cap(0.3))
        assert p00 == pytest.approx(0.3)

    def test_empty_selection_zero_detection(self):
        labels = np.array([0, 1, 1, 1])
        tau, p00 = constrained_detection([0.5] * 4, labels, _cap(0.2))
        assert p00 == 0.0

    def test_monotone_in_budget(self):
        rng = np.random.default_rng(5)
        scores = rng.normal(size=500)
        labels = rng.integers(0, 2, 500)
        last = -1.0
        for budget in (0.05, 0.1, 0.3, 0.6, 0.9):
            _, p00 = constrained_detection(scores, labels, _cap(budget))
            assert p00 >= last
            last = p00

    def test_random_scores_expected_detection(self):
        # Independent scores: flagged rows are a uniform subset, so the
        # joint detection rate averages budget * pi0-hat. Monte-Carlo oracle
        # with 10,000 repetitions, tolerance three standard errors.
        rng = np.random.default_rng(42)
        n, n0 = 1000, 100
        budget = 0.1
        labels = np.zeros(n, int)
        labels[n0:] = 1
        m = int(budget * n)
        reps = 10_000
        vals = np.empty(reps)
        for r in range(reps):
            scores = rng.random(n)
            _, p00 = constrained_detection(scores, labels, _cap(budget))
            vals[r] = p00
        expected = budget * (n0 / n)
        # per-rep detections are hypergeometric(n, n0, m)
        var_tp = m * (n0 / n) * (1 - n0 / n) * (n - m) / (n - 1)
        se_mean = math.sqrt(var_tp) / n / math.sqrt(reps)
        assert abs(vals.mean() - expected) <= 3 * se_mean


class _ArrayScorer:
    """Scores queries by their first coordinate; enough for classifier tests."""

    def minority_score(self, points):
        return np.asarray(points, float)[:, 0]


class TestCalibratedClassifier:
    def test_predicts_strictly_above_tau(self):
        clf = CalibratedClassifier(_ArrayScorer(), tau=0.5)
        np.testing.assert_array_equal(
            clf.predict(np.array([[0.9], [0.1], [0.5]])), [0, 1, 1])

    def test_minus_inf_flags_everything(self):
        clf = CalibratedClassifier(_ArrayScorer(), tau=-math.inf)
        assert (clf.predict(np.zeros((5, 1))) == 0).all()

    def test_plus_inf_flags_nothing(self):
        # the b -> 0 limit: the classifier never assigns the minority label
        clf = CalibratedClassifier(_ArrayScorer(), tau=math.inf)
        assert (clf.predict(np.full((5, 1), 1e12)) == 1).all()

    def test_fit_calibrated_meets_budget(self):
        rng = np.random.default_rng(6)
        calib_points = rng.normal(size=(40, 1))
        cap = _cap(0.25)
        clf = fit_calibrated(_ArrayScorer(), calib_points, cap)
        assert (clf.predict(calib_points) == 0).mean() <= cap.budget


class TestDiagnostics:
    def test_tie_atom_reported(self):
        diag = calibration_diagnostics([1.0, 0.5, 0.5, 0.5, 0.2], _cap(0.4))
        assert diag.tau == 0.5
        assert diag.n_selected == 1
        assert diag.n_ties_at_tau == 3
