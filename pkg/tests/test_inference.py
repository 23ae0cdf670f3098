import math

import numpy as np
import pytest

import specmix.inference as inf
import specmix.mixed_model as mm
from specmix.errors import ConfigError, NonPSDCovariance
from specmix.panels import CoefficientPanel
from specmix.shrinkage import ThresholdConfig, SelectedSet

PI2_6 = math.pi**2 / 6.0


def equicorrelated(S, rho):
    G = np.full((S, S), rho)
    np.fill_diagonal(G, 1.0)
    return G


def small_family(S=6, T=16, rho=0.4, noise=0.05):
    sigma = np.zeros(T)
    sigma[:4] = (0.5, 0.3, 0.2, 0.1)
    return mm.CovarianceFamily(sigma, equicorrelated(S, rho), noise)


class TestNormalQuantile:
    def test_values(self):
        assert inf.normal_quantile(0.5) == pytest.approx(0.0, abs=1e-10)
        assert inf.normal_quantile(0.05) == pytest.approx(1.6448536269514722, abs=1e-9)
        assert inf.normal_quantile(0.1) == pytest.approx(1.2815515655446004, abs=1e-9)


class TestSplitSample:
    def test_zero_covariance_copies(self):
        T = 16
        Y = np.random.default_rng(0).standard_normal((4, T))
        V = np.zeros((T, 4, 4))
        with pytest.raises(ConfigError):
            # a family needs positive noise; zero covariance goes in as a stack
            mm.CovarianceFamily(np.zeros(T), np.eye(4), 0.0)
        halves = inf.split_sample(Y, V, seed=1)
        assert np.array_equal(halves.xi1.coeffs, Y)
        assert np.array_equal(halves.xi2.coeffs, Y)

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(1)
        S, T = 6, 16
        Y = rng.standard_normal((S, T))
        family = small_family(S, T)
        halves = inf.split_sample(Y, family, seed=9)
        assert np.max(np.abs(halves.xi1.coeffs + halves.xi2.coeffs - 2 * Y)) <= 1e-12

    def test_determinism(self):
        Y = np.random.default_rng(2).standard_normal((6, 16))
        family = small_family()
        a = inf.split_sample(Y, family, seed=5)
        b = inf.split_sample(Y, family, seed=5)
        assert np.array_equal(a.xi1.coeffs, b.xi1.coeffs)
        c = inf.split_sample(Y, family, seed=6)
        assert not np.array_equal(a.xi1.coeffs, c.xi1.coeffs)

    def test_halves_independent_with_doubled_variance(self):
        S, T = 4, 8
        family = small_family(S, T, rho=0.5, noise=0.1)
        n = 10_000
        rng = np.random.default_rng(3)
        x1 = np.empty((n, S))
        x2 = np.empty((n, S))
        k_probe = 0  # strongest random-effects coordinate
        for i in range(n):
            Y = family.sample(rng)  # Y ~ N(0, V_k) columnwise
            halves = inf.split_sample(Y, family, seed=1000 + i)
            x1[i] = halves.xi1.coeffs[:, k_probe]
            x2[i] = halves.xi2.coeffs[:, k_probe]
        V_k = family.matrix(k_probe + 1)
        cov12 = (x1[:, None, :] * x2[:, :, None]).mean(axis=0)
        var1 = np.cov(x1.T, bias=True)
        # xi1 and xi2 are uncorrelated; each has variance 2 V_k
        scale = np.sqrt(np.outer(np.diag(V_k), np.diag(V_k)))
        assert np.max(np.abs(cov12) / scale) <= 6.0 / math.sqrt(n) * 3
        assert np.max(np.abs(var1 - 2 * V_k) / scale) <= 0.15

    def test_nonpsd_stack_rejected(self):
        T = 4
        Y = np.zeros((3, T))
        V = np.stack([np.diag([1.0, 1.0, -0.5]) for _ in range(T)])
        with pytest.raises(NonPSDCovariance):
            inf.split_sample(Y, V, seed=0)


class TestRiskEstimator:
    def test_single_coefficient_reduction(self):
        # S=1, w=1: reduces to (xi - h)^2 - 2 sigma^2
        xi = np.asarray([[1.7]])
        V = np.asarray([[[0.3]]])
        got = inf.risk_estimator(xi, np.asarray([0.5]), np.ones((1, 1)), V)
        assert got == pytest.approx((1.7 - 0.5) ** 2 - 2 * 0.3, rel=1e-12)

    def test_noiseless_equal_estimate(self):
        S, T = 6, 16
        family = small_family(S, T)
        h = np.random.default_rng(4).standard_normal(T)
        xi2 = np.tile(h, (S, 1))
        w = mm.uniform_weights(S, T)
        got = inf.risk_estimator(xi2, h, w, family)
        expect = -2.0 * float(np.sum(family.diagonal_values()))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_unbiasedness_monte_carlo(self):
        rng = np.random.default_rng(5)
        S, T = 64, 128
        sigma = np.zeros(T)
        sigma[:8] = 0.25
        family = mm.CovarianceFamily(sigma, equicorrelated(S, 0.3), 0.05)
        h = rng.standard_normal(T)
        h_hat = h + 0.3 * rng.standard_normal(T)
        target = float(np.sum((h - h_hat) ** 2))
        w = mm.uniform_weights(S, T)
        n = 4000
        vals = np.empty(n)
        for i in range(n):
            xi2 = h[None, :] + math.sqrt(2.0) * family.sample(rng)
            vals[i] = inf.risk_estimator(xi2, h_hat, w, family)
        se = vals.std(ddof=1) / math.sqrt(n)
        assert abs(vals.mean() - target) <= 3 * se

    def test_variance_formula_and_monte_carlo(self):
        rng = np.random.default_rng(6)
        S, T = 64, 128
        sigma = np.zeros(T)
        sigma[:8] = 0.25
        family = mm.CovarianceFamily(sigma, equicorrelated(S, 0.3), 0.05)
        h = rng.standard_normal(T)
        h_hat = h + 0.3 * rng.standard_normal(T)
        w = mm.uniform_weights(S, T)
        tau2 = inf.risk_variance(h, h_hat, w, family)
        n = 4000
        vals = np.empty(n)
        for i in range(n):
            xi2 = h[None, :] + math.sqrt(2.0) * family.sample(rng)
            vals[i] = inf.risk_estimator(xi2, h_hat, w, family)
        mc_var = vals.var(ddof=1)
        assert abs(mc_var - tau2) / tau2 <= 0.10

    def test_equal_weight_isotropic_first_term(self):
        # V = v I with equal weights: 8||diag(w)V||_F^2 = 8 v^2 / S per k
        S, T = 8, 4
        v = 0.3
        V = np.stack([v * np.eye(S) for _ in range(T)])
        w = mm.uniform_weights(S, T)
        tau2 = inf.risk_variance(np.zeros(T), np.zeros(T), w, V)
        assert tau2 == pytest.approx(T * 8 * v * v / S, rel=1e-12)


class TestRadiusFixedPoint:
    def test_alpha_half_collapses_to_risk(self):
        r2 = inf.radius_fixed_point(1.7, A=2.0, c=0.5, alpha=0.5)
        assert r2 == pytest.approx(1.7, abs=1e-10)
        r2 = inf.radius_fixed_point(-3.0, A=2.0, c=0.5, alpha=0.5)
        assert r2 == 0.0

    def test_residual_small(self):
        z = inf.normal_quantile(0.05)
        for rh, A, c in [(0.4, 2.0, 0.3), (0.0, 5.0, 1.0), (10.0, 0.1, 0.05)]:
            r2 = inf.radius_fixed_point(rh, A, c, 0.05)
            resid = r2 - z * math.sqrt(A + 8 * c * r2) - max(rh, 0.0)
            assert abs(resid) <= 1e-10

    def test_monotone_in_alpha(self):
        vals = [
            inf.radius_fixed_point(0.8, 1.5, 0.2, a) for a in (0.01, 0.05, 0.2, 0.5)
        ]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


def _sequence_panel(rng, family, h):
    return h[None, :] + family.sample(rng)


class TestConfidenceRegion:
    def _setup(self, seed=7, S=24, T=64):
        rng = np.random.default_rng(seed)
        sigma = np.zeros(T)
        sigma[:6] = (0.5, 0.25, 0.25, 0.125, 0.125, 0.125)
        family = mm.CovarianceFamily(sigma, equicorrelated(S, 0.4), PI2_6 / T)
        h = np.zeros(T)
        h[:10] = 2.0 * rng.standard_normal(10)
        Y = _sequence_panel(rng, family, h)
        return Y, h, family

    def test_known_v_region_runs_and_scales(self):
        Y, h, family = self._setup()
        cfg = mm.FitConfig(thresholds=ThresholdConfig(fdr_q=0.01))
        region = inf.confidence_region(
            Y, 0.05, inf.METHOD_KNOWN_V, seed=3, fit_cfg=cfg, known_family=family
        )
        assert region.domain == "coefficient"
        assert region.radius > 0
        freq = region.to_frequency()
        assert freq.radius == pytest.approx(region.radius * math.sqrt(h.size), rel=1e-12)
        assert freq.domain == "frequency"

    def test_alpha_half_radius_is_sqrt_risk(self):
        Y, h, family = self._setup(seed=8)
        cfg = mm.FitConfig(thresholds=ThresholdConfig(fdr_q=0.01))
        region = inf.confidence_region(
            Y, 0.5, inf.METHOD_KNOWN_V, seed=3, fit_cfg=cfg, known_family=family
        )
        assert region.radius**2 == pytest.approx(
            max(region.diagnostics["risk_hat"], 0.0), abs=1e-9
        )

    def test_radius_monotone_in_alpha_fixed_panel(self):
        Y, h, family = self._setup(seed=9)
        cfg = mm.FitConfig(thresholds=ThresholdConfig(fdr_q=0.01))
        radii = [
            inf.confidence_region(
                Y, a, inf.METHOD_KNOWN_V, seed=11, fit_cfg=cfg, known_family=family
            ).radius
            for a in (0.02, 0.05, 0.1, 0.3, 0.5)
        ]
        assert all(a >= b for a, b in zip(radii, radii[1:]))

    def test_plugin_region_runs(self):
        Y, h, family = self._setup(seed=10, S=32)
        cfg = mm.FitConfig(thresholds=ThresholdConfig(fdr_q=0.01))
        region = inf.confidence_region(Y, 0.05, inf.METHOD_PLUGIN, seed=3, fit_cfg=cfg)
        assert region.radius > 0
        payload = region.to_json_dict()
        assert payload["radius_construction"] == "conservative_fixed_point"
        assert set(payload["diagnostics"]) == {"A", "c", "risk_hat"}

    def test_known_v_needs_family(self):
        Y, h, family = self._setup(seed=12)
        with pytest.raises(ConfigError):
            inf.confidence_region(Y, 0.05, inf.METHOD_KNOWN_V, seed=0)


class TestBootstrapRegion:
    def _tiny_fit(self, S=8, T=32, sigma_e2=PI2_6, sigma_scale=1.0):
        sigma = np.zeros(T)
        sigma[:3] = sigma_scale * np.asarray([0.4, 0.2, 0.1])
        K_u = SelectedSet(np.arange(1, 4) if sigma_scale else np.empty(0), 0.0)
        re_cov = mm.RandomEffectsCovariance(
            sigma, K_u, mm.CorrelationMatrix(equicorrelated(S, 0.3), True, 0.7)
        )
        h = np.zeros(T)
        h[:5] = (2.0, -1.5, 1.0, 0.7, -0.6)
        return mm.ModelFit(
            h_hat=h,
            K_h=SelectedSet(np.arange(1, 6), 0.0),
            re_cov=re_cov,
            weights=mm.uniform_weights(S, T),
            weights_mode="gls",
            iterations=1,
            converged=True,
            delta=0.01,
            sigma_e2=sigma_e2,
        )

    def test_deterministic_and_positive(self):
        fit = self._tiny_fit()
        r1 = inf.bootstrap_region(fit, 200, 0.1, seed=4)
        r2 = inf.bootstrap_region(fit, 200, 0.1, seed=4)
        assert r1.radius == r2.radius
        assert r1.radius > 0

    def test_zero_noise_degenerate_radius(self):
        fit = self._tiny_fit(sigma_e2=1e-300, sigma_scale=0.0)
        region = inf.bootstrap_region(fit, 150, 0.05, seed=5)
        assert region.radius <= 1e-12

    def test_minimum_samples_enforced(self):
        fit = self._tiny_fit()
        with pytest.raises(ConfigError):
            inf.bootstrap_region(fit, 50, 0.05, seed=1)

    def test_radius_monotone_in_alpha(self):
        fit = self._tiny_fit()
        radii = [
            inf.bootstrap_region(fit, 400, a, seed=6).radius for a in (0.02, 0.1, 0.4)
        ]
        assert all(a >= b for a, b in zip(radii, radii[1:]))
