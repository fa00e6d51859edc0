"""
Tests para EstimationService: efecto causal, regresión semi-supervisada y covariable faltante.
"""
import numpy as np
from django.test import SimpleTestCase
from scipy import linalg, optimize

from calibracion.estimand import misscov_ef
from calibracion.solver import GecConfig, gec_profile
from core.dataset import Dataset
from core.exceptions import ConfigError, DimensionMismatch, OneArmEmpty, SeparationError
from simulacion.generators import SimDesign, gen_causal

from .services import (
    EstimateResult,
    EstimationOptions,
    EstimationService,
    ci_multiplier,
    normalize_method,
)


def _ols(X, y):
    design = np.column_stack([np.ones(X.shape[0]), X])
    beta, *_ = linalg.lstsq(design, y)
    return beta


class AteEstimateTest(SimpleTestCase):
    """Tests para ate_estimate y prepare_arms."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.rng = np.random.default_rng(70)
        self.options = EstimationOptions(compute_se=False)

    def test_noise_free_randomized(self):
        """Test de ATE = 1 sin ruido y con tratamiento aleatorizado."""
        X = self.rng.standard_normal((300, 4))
        T = (self.rng.random(300) < 0.5).astype(float)
        Y = X.sum(axis=1) + T
        result = EstimationService.ate_estimate(X, T, Y, self.options)
        self.assertAlmostEqual(result.ate, 1.0, delta=1e-6)
        self.assertAlmostEqual(result.ate, result.theta1 - result.theta0, places=12)

    def test_separation(self):
        """Test de tratamiento determinado por X."""
        X = self.rng.standard_normal((100, 2))
        T = (X[:, 0] > 0).astype(float)
        with self.assertRaises(SeparationError):
            EstimationService.ate_estimate(X, T, X[:, 1], self.options)

    def test_empty_arm(self):
        """Test de un brazo vacío."""
        X = self.rng.standard_normal((20, 2))
        with self.assertRaises(OneArmEmpty):
            EstimationService.ate_estimate(X, np.ones(20), X[:, 0], self.options)

    def test_swapping_arms_negates(self):
        """Test de que invertir T cambia el signo del ATE y conserva el SE."""
        sample = gen_causal(SimDesign("causal", N=400, M_reps=2), np.random.default_rng(71))
        options = EstimationOptions()
        direct = EstimationService.ate_estimate(sample.X, sample.T, sample.Y, options)
        swapped = EstimationService.ate_estimate(sample.X, 1.0 - sample.T, sample.Y, options)
        self.assertAlmostEqual(swapped.ate, -direct.ate, delta=1e-6)
        self.assertAlmostEqual(swapped.theta1, direct.theta0, delta=1e-6)
        self.assertTrue(np.isfinite(direct.se_ate))
        self.assertGreater(direct.se_ate, 0.0)
        self.assertAlmostEqual(swapped.se_ate, direct.se_ate, delta=1e-5)

    def test_sq_closed_form(self):
        """Test de SQ con normalización contra los pesos lineales en forma cerrada."""
        sample = gen_causal(SimDesign("causal", N=300, M_reps=2), np.random.default_rng(72))
        treated, _ = EstimationService.prepare_arms(sample.X, sample.T, sample.Y, self.options)
        theta, _ = EstimationService.point_estimate(treated, "sq", self.options)

        data = treated.data
        resp = data.respondents
        s = np.column_stack([np.ones(data.n), treated.m_hat, 1.0 / treated.pi_hat])
        lambda_ = linalg.solve(s[resp].T @ s[resp], s.sum(axis=0))
        weights = s[resp] @ lambda_
        expected = weights @ data.missing[resp, 0] / weights.sum()
        self.assertAlmostEqual(theta[0], expected, delta=1e-7)


class SslEstimateTest(SimpleTestCase):
    """Tests para ssl_estimate."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.rng = np.random.default_rng(73)

    def test_no_unlabeled_is_ols(self):
        """Test de que sin no etiquetados el estimador es OLS."""
        X = self.rng.standard_normal((80, 2))
        y = 1.0 + X @ np.array([0.5, 2.0]) + self.rng.standard_normal(80)
        result = EstimationService.ssl_estimate(X, y, None)
        np.testing.assert_allclose(result.theta_hat, _ols(X, y), atol=1e-8)
        self.assertEqual(result.coef_names, ("beta0", "beta1", "beta2"))
        self.assertTrue(np.all(result.se > 0))

    def test_low_noise_recovers_coefficients(self):
        """Test de β recuperado con ruido chico."""
        beta = np.array([1.0, -1.0, 3.0])
        X = self.rng.standard_normal((300, 2))
        y = beta[0] + X @ beta[1:] + 0.01 * self.rng.standard_normal(300)
        result = EstimationService.ssl_estimate(X[:100], y[:100], X[100:], options=EstimationOptions(compute_se=False))
        np.testing.assert_allclose(result.theta_hat, beta, atol=0.01)
        self.assertEqual((result.n, result.n_respondents), (300, 100))

    def test_unknown_mechanism(self):
        """Test de mecanismo de etiquetado desconocido."""
        X = self.rng.standard_normal((30, 1))
        with self.assertRaises(ConfigError):
            EstimationService.ssl_estimate(X[:10], X[:10, 0], X[10:], mechanism="mnar")

    def test_bootstrap_standard_errors(self):
        """Test de SE bootstrap finitos y positivos."""
        X = self.rng.standard_normal((120, 1))
        y = 1.0 + X[:, 0] + self.rng.standard_normal(120)
        options = EstimationOptions(se_method="bootstrap", bootstrap_b=50, seed=3)
        result = EstimationService.ssl_estimate(X[:60], y[:60], X[60:], mechanism="mcar", options=options)
        self.assertEqual(result.se.shape, (2,))
        self.assertTrue(np.all(np.isfinite(result.se)))
        self.assertTrue(np.all(result.se > 0))


class MisscovEstimateTest(SimpleTestCase):
    """Tests para misscov_estimate."""

    def test_no_missing_is_ols(self):
        """Test de X₂ completa: coincide con OLS sobre (1, x₁, x₂)."""
        rng = np.random.default_rng(74)
        x1 = rng.standard_normal(100)
        x2 = (rng.random(100) < 0.5).astype(float)
        y = 1.0 + x1 + 2.0 * x2 + rng.standard_normal(100)
        result = EstimationService.misscov_estimate(x1, x2, y, method="hd")
        np.testing.assert_allclose(result.theta_hat, _ols(np.column_stack([x1, x2]), y), atol=1e-8)
        self.assertEqual(result.method, "HD")

    def test_sq_hand_instance(self):
        """Test de SQ en 8 unidades contra mínimos cuadrados con restricciones de igualdad en forma cerrada."""
        x1 = np.array([-1.5, -0.8, -0.2, 0.3, 0.9, 1.4, 0.1, -0.5])
        x2 = np.array([0.4, 1.1, -0.3, 0.8, -1.0, 0.2, np.nan, np.nan])
        y = np.array([0.9, 2.6, 0.1, 2.9, -0.4, 2.8, 1.7, 0.2])
        m_hat = np.array([0.3, 0.9, -0.1, 0.6, -0.7, 0.4, 0.5, -0.2])
        pi = np.array([0.8, 0.7, 0.75, 0.6, 0.85, 0.7, 0.65, 0.7])
        data = Dataset.from_arrays(np.column_stack([x1, y]), x2)
        resp = data.respondents

        def design(x2_values):
            return np.column_stack([np.ones(8), x1, x2_values])

        def residual(beta):
            X_hat = design(m_hat)
            s = np.column_stack([X_hat * (y - X_hat @ beta)[:, None], 1.0 / pi])
            # min ½Σω² sujeto a Σ_resp ω s = Σ s
            weights = s[resp] @ linalg.solve(s[resp].T @ s[resp], s.sum(axis=0))
            X = design(x2)[resp]
            return weights @ (X * (y[resp] - X @ beta)[:, None]) / 8.0

        start = _ols(np.column_stack([x1, x2])[resp], y[resp])
        oracle = optimize.root(residual, start, method="hybr", tol=1e-14)
        self.assertTrue(oracle.success, msg=oracle.message)

        result = gec_profile(data, misscov_ef(1, 1), m_hat, pi, GecConfig(entropy="sq", theta_tol=1e-10))
        np.testing.assert_allclose(result.theta_hat, oracle.x, atol=1e-7)
        self.assertEqual(np.count_nonzero(result.weights), 6)

    def test_two_missing_columns(self):
        """Test de más de una covariable faltante."""
        with self.assertRaises(DimensionMismatch):
            EstimationService.misscov_estimate(np.zeros(10), np.zeros((10, 2)), np.zeros(10))


class HelpersTest(SimpleTestCase):
    """Tests para los tokens de método, los IC y las opciones."""

    def test_normalize_method(self):
        """Test de nombres canónicos de método."""
        self.assertEqual(normalize_method("et"), "ET")
        self.assertEqual(normalize_method("ht"), "IPW")
        self.assertEqual(normalize_method(" aipw "), "AIPW")
        with self.assertRaises(ConfigError):
            normalize_method("cbps")

    def test_ci_multiplier(self):
        """Test del multiplicador normal."""
        self.assertEqual(ci_multiplier(0.95), 1.959964)
        self.assertAlmostEqual(ci_multiplier(0.90), 1.644854, places=6)
        with self.assertRaises(ConfigError):
            ci_multiplier(1.5)

    def test_confidence_intervals(self):
        """Test de IC θ̂ ± z·SE."""
        result = EstimateResult("ssl", "ET", np.array([2.0]), np.array([0.5]), None, ("mean",), 10, 6)
        low, high = result.confidence_intervals()
        self.assertAlmostEqual(low[0], 2.0 - 1.959964 * 0.5, places=12)
        self.assertAlmostEqual(high[0], 2.0 + 1.959964 * 0.5, places=12)

    def test_invalid_options(self):
        """Test de opciones inválidas."""
        with self.assertRaises(ConfigError):
            EstimationOptions(se_method="jackknife")
        with self.assertRaises(ConfigError):
            EstimationOptions(ps_truncation=0.6)
