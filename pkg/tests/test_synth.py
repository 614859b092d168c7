import math

import numpy as np
import pytest
from scipy import integrate, stats

from capclass.core import CapacitySpec, class_counts
from capclass.synth import (EllipseSpec, OneDimSpec, analytic_bayes_region,
                            analytic_gamma_star, cauchy_pdf, default_ellipse_spec,
                            gen_1d, gen_ellipses, mu_c, normal_pdf, p_gamma,
                            region_contains, regions_for_gamma, rule_metrics)


def _mixture_pdf(spec):
    return lambda x: (spec.pi0 * normal_pdf(x)
                      + spec.pi1 * cauchy_pdf(x, spec.mu))


class TestMuC:
    def test_golden_values(self):
        assert mu_c(0.05) == pytest.approx(3.522, abs=0.01)
        assert mu_c(0.01) == pytest.approx(8.721, abs=0.01)

    def test_monotone_spot(self):
        assert mu_c(0.05) < mu_c(0.02) < mu_c(0.01)

    def test_tangency_residual(self):
        # at mu_c the weighted densities just touch: max of pi0 f0 - pi1 f1 is 0
        pi0 = 0.03
        mu = mu_c(pi0)
        xs = np.linspace(-5, 5, 200_001)
        gap = pi0 * normal_pdf(xs) - (1 - pi0) * cauchy_pdf(xs, mu)
        assert abs(gap.max()) < 1e-5

    def test_domain(self):
        with pytest.raises(ValueError):
            mu_c(0.6)


class TestRegions:
    def test_gamma_zero_is_everything(self):
        region = regions_for_gamma(OneDimSpec(5.0, 0.05), 0.0)
        assert region == [(-math.inf, math.inf)]
        assert p_gamma(OneDimSpec(5.0, 0.05), 0.0) == pytest.approx(1.0)

    def test_above_peak_empty(self):
        spec = OneDimSpec(6.0, 0.05)
        assert regions_for_gamma(spec, 1e9) == []

    def test_boundaries_solve_the_ratio_equation(self):
        spec = OneDimSpec(8.0, 0.02)
        for gamma in (0.5, 3.0, 20.0):
            for lo, hi in regions_for_gamma(spec, gamma):
                for x in (lo, hi):
                    assert normal_pdf(x) == pytest.approx(
                        gamma * cauchy_pdf(x, spec.mu), rel=1e-8)

    def test_p_gamma_nonincreasing(self):
        spec = OneDimSpec(10.0, 0.01)
        gammas = np.logspace(-3, 2, 40)
        vals = [p_gamma(spec, g) for g in gammas]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_mass_matches_adaptive_quadrature(self):
        # independent route: integrate the mixture density numerically
        spec = OneDimSpec(10.0, 0.01)
        pdf = _mixture_pdf(spec)
        for gamma in (2.0, 26.0):
            intervals = regions_for_gamma(spec, gamma)
            quad_mass = sum(integrate.quad(pdf, lo, hi, epsabs=1e-10)[0]
                            for lo, hi in intervals)
            assert p_gamma(spec, gamma, intervals) == pytest.approx(
                quad_mass, abs=1e-8)


class TestGammaStar:
    def test_budget_met_exactly(self):
        spec = OneDimSpec(10.0, 0.01)
        cap = CapacitySpec(b=2.0, pi0=0.01)
        gamma, region = analytic_gamma_star(spec, cap)
        assert abs(p_gamma(spec, gamma, region) - cap.budget) <= 1e-6
        assert len(region) >= 1

    def test_unconstrained_budget(self):
        spec = OneDimSpec(4.0, 0.5)
        gamma, region = analytic_gamma_star(spec, CapacitySpec(b=2.0, pi0=0.5))
        assert gamma == 0.0
        assert region == [(-math.inf, math.inf)]

    def test_golden_file_regression(self, golden_oracle_rows):
        for row in golden_oracle_rows:
            spec = OneDimSpec(mu=row["mu"], pi0=row["pi0"])
            cap = CapacitySpec(b=row["b"], pi0=row["pi0"])
            gamma, region = analytic_gamma_star(spec, cap)
            assert gamma == pytest.approx(row["gamma_star"], rel=1e-9)
            assert len(region) == 1
            assert region[0][0] == pytest.approx(row["region_lo"], abs=1e-9)
            assert region[0][1] == pytest.approx(row["region_hi"], abs=1e-9)
            assert abs(p_gamma(spec, gamma, region) - cap.budget) <= 1e-6

    @pytest.mark.slow
    def test_monte_carlo_cross_check(self):
        # second route: 10^7 mixture samples against the region indicator
        spec = OneDimSpec(10.0, 0.01)
        cap = CapacitySpec(b=2.0, pi0=0.01)
        gamma, region = analytic_gamma_star(spec, cap)
        n = 10_000_000
        rng = np.random.default_rng(99)
        labels = rng.random(n) < spec.pi0
        x = np.where(labels, rng.standard_normal(n),
                     spec.mu + rng.standard_cauchy(n))
        hits = region_contains(region, x)
        p_hat = hits.mean()
        se = math.sqrt(cap.budget * (1 - cap.budget) / n)
        assert abs(p_hat - cap.budget) <= 3 * se

    def test_proposition1_at_bayes_budget(self):
        # with budget equal to the Bayes region's own mass, the capacity rule
        # reproduces the Bayes region: they are the same thresholding family
        spec = OneDimSpec(10.0, 0.02)
        bayes = analytic_bayes_region(spec)
        assert len(bayes) == 1
        mass = p_gamma(spec, spec.pi1 / spec.pi0, bayes)
        gamma, region = analytic_gamma_star(
            spec, CapacitySpec(b=mass / spec.pi0, pi0=spec.pi0))
        assert gamma == pytest.approx(spec.pi1 / spec.pi0, rel=1e-6)
        assert region[0][0] == pytest.approx(bayes[0][0], abs=1e-6)
        assert region[0][1] == pytest.approx(bayes[0][1], abs=1e-6)


class TestBayesRegion:
    def test_empty_below_mu_c(self):
        assert analytic_bayes_region(OneDimSpec(5.0, 0.01)) == []
        assert analytic_bayes_region(OneDimSpec(3.0, 0.05)) == []

    def test_roots_satisfy_equation(self):
        spec = OneDimSpec(10.0, 0.01)
        region = analytic_bayes_region(spec)
        assert len(region) == 1
        x1, x2 = region[0]
        assert x1 < x2
        for x in (x1, x2):
            assert spec.pi0 * normal_pdf(x) == pytest.approx(
                spec.pi1 * cauchy_pdf(x, spec.mu), abs=1e-8)

    def test_balanced_prior_contains_mode(self):
        region = analytic_bayes_region(OneDimSpec(30.0, 0.49))
        assert region_contains(region, np.array([0.0]))[0]


class TestRuleMetrics:
    def test_full_region_is_always_right_on_minority(self):
        spec = OneDimSpec(6.0, 0.05)
        cap = CapacitySpec(b=1.0, pi0=0.05)
        met = rule_metrics(spec, [(-math.inf, math.inf)], cap)
        assert met["sensitivity"] == pytest.approx(1.0)
        assert met["specificity"] == pytest.approx(0.0)
        assert met["positive_rate"] == pytest.approx(1.0)
        assert met["m"] == pytest.approx(cap.budget)  # discounted to w

    def test_capacity_rule_on_budget(self):
        spec = OneDimSpec(10.0, 0.01)
        cap = CapacitySpec(b=2.0, pi0=0.01)
        gamma, region = analytic_gamma_star(spec, cap)
        met = rule_metrics(spec, region, cap)
        assert met["positive_rate"] == pytest.approx(cap.budget, abs=1e-6)
        assert met["m"] == pytest.approx(met["sensitivity"])


class TestGen1d:
    def test_all_minority_moments(self):
        spec = OneDimSpec(mu=7.0, pi0=0.999999)
        data = gen_1d(spec, 50_000, seed=1)
        x = data.features[data.labels == 0, 0]
        assert abs(x.mean()) < 0.02
        assert abs(x.std() - 1.0) < 0.02

    def test_minority_count_binomial(self):
        spec = OneDimSpec(mu=3.0, pi0=0.01)
        data = gen_1d(spec, 1000, seed=2)
        c0, _ = class_counts(data)
        # 3-sigma binomial band around the expected 10
        assert abs(c0 - 10) <= 3 * math.sqrt(1000 * 0.01 * 0.99) + 1

    def test_deterministic(self):
        spec = OneDimSpec(mu=3.0, pi0=0.2)
        a = gen_1d(spec, 100, seed=3)
        b = gen_1d(spec, 100, seed=3)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_majority_tail_heavier(self):
        # Cauchy tail mass beyond |x| = 4 is 1 - 2*arctan(4)/pi; normal is ~6e-5
        spec = OneDimSpec(mu=0.0, pi0=0.5)
        data = gen_1d(spec, 400_000, seed=4)
        x = data.features[:, 0]
        tail1 = (np.abs(x[data.labels == 1]) > 4).mean()
        tail0 = (np.abs(x[data.labels == 0]) > 4).mean()
        expected = 1.0 - 2.0 * math.atan(4.0) / math.pi
        n1 = (data.labels == 1).sum()
        se = math.sqrt(expected * (1 - expected) / n1)
        assert abs(tail1 - expected) <= 3 * se
        assert tail0 < 0.001 < tail1


class TestEllipses:
    def test_support(self):
        spec = default_ellipse_spec(n0=200, pi0=0.1)
        data = gen_ellipses(spec, seed=5)
        x0 = data.features[data.labels == 0]
        x1 = data.features[data.labels == 1]
        a0x, a0y = spec.inner_axes
        a1x, a1y = spec.outer_axes
        assert ((x0[:, 0] / a0x) ** 2 + (x0[:, 1] / a0y) ** 2 <= 1 + 1e-9).all()
        assert ((x1[:, 0] / a1x) ** 2 + (x1[:, 1] / a1y) ** 2 <= 1 + 1e-9).all()

    def test_counts_match_pi0(self):
        spec = default_ellipse_spec(n0=100, pi0=1.0 / 11.0)
        data = gen_ellipses(spec, seed=6)
        c0, c1 = class_counts(data)
        assert c0 == 100 and c1 == 1000

    def test_balance_point_expected_overlap(self):
        # at pi0 = 1/11 with the default 10:1 area ratio, the expected number
        # of majority points inside the inner ellipse equals n0
        spec = default_ellipse_spec(n0=100, pi0=1.0 / 11.0)
        inner_area = math.pi * spec.inner_axes[0] * spec.inner_axes[1]
        outer_area = math.pi * spec.outer_axes[0] * spec.outer_axes[1]
        n1 = round(spec.n0 * (1 - spec.pi0) / spec.pi0)
        assert n1 * inner_area / outer_area == pytest.approx(spec.n0)
        # empirical check over a handful of seeds
        inside = []
        for seed in range(10):
            data = gen_ellipses(spec, seed=seed)
            x1 = data.features[data.labels == 1]
            inside.append(((x1 ** 2).sum(axis=1) <= 1.0).sum())
        assert abs(np.mean(inside) - 100) < 3 * np.std(inside) / math.sqrt(10) + 1

    def test_majority_uniform_chi_square(self):
        # eight equal-probability angular sectors in the scaled plane
        spec = default_ellipse_spec(n0=50, pi0=0.2)
        data = gen_ellipses(spec, seed=7)
        x1 = data.features[data.labels == 1] / np.array(spec.outer_axes)
        angles = np.arctan2(x1[:, 1], x1[:, 0])
        counts, _ = np.histogram(angles, bins=np.linspace(-math.pi, math.pi, 9))
        expected = len(x1) / 8.0
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < stats.chi2.ppf(0.99, df=7)

    def test_containment_validated(self):
        with pytest.raises(ValueError, match="contained"):
            EllipseSpec(inner_axes=(2.0, 1.0), outer_axes=(1.5, 3.0),
                        n0=10, pi0=0.1)
