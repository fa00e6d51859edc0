"""
Tests para el sándwich por valores de influencia y el bootstrap.
"""
import numpy as np
from django.test import SimpleTestCase
from scipy import special

from core.dataset import Dataset
from core.entropy import EntropyKind, get_entropy
from core.exceptions import ConfigError, TooFewRespondents, TooManyFailures
from modelos.psmodel import ResponseModel, fit_logistic, with_intercept

from .estimand import mean_ef, ols_ef
from .solver import GecConfig, gec_profile
from .variance import bootstrap_se, gamma_fit, influence_parts, influence_values, sandwich_se


def sample_mean(sample):
    return [np.mean(sample.missing[:, 0])]


def constant_estimate(sample):
    return [3.0]


def always_fails(sample):
    raise TooFewRespondents("sin respondentes")


class GammaFitTest(SimpleTestCase):
    """Tests para gamma_fit."""

    def test_exact_projection(self):
        """Test de γ̂ exacto cuando U es combinación lineal de s."""
        rng = np.random.default_rng(60)
        s = rng.standard_normal((20, 3))
        gamma = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]])
        lambda_hat = np.array([0.1, -0.1, 0.05])
        np.testing.assert_allclose(gamma_fit(s @ gamma.T, s, lambda_hat, get_entropy("et")), gamma, atol=1e-10)


class SandwichTest(SimpleTestCase):
    """Tests para influence_parts y sandwich_se."""

    def test_all_respondents_mean(self):
        """Test de δ ≡ 1 en la media: SE = SD/√N."""
        rng = np.random.default_rng(61)
        y = rng.standard_normal(40) * 2.0 + 1.0
        data = Dataset.from_arrays(np.zeros(40), y)
        for kind in (EntropyKind.ET, EntropyKind.SQ):
            result = gec_profile(data, mean_ef(), y + rng.standard_normal(40), np.ones(40), GecConfig(entropy=kind))
            parts = influence_parts(result, mean_ef(), data)
            se, cov = sandwich_se(data, result, parts)
            self.assertAlmostEqual(se[0], np.std(y) / np.sqrt(40), delta=1e-8, msg=str(kind))
            self.assertAlmostEqual(cov[0, 0], se[0] ** 2, places=14)
            np.testing.assert_allclose(parts.tau1_hat, [[-1.0]])

    def test_ols_matches_hc0(self):
        """Test de δ ≡ 1 en OLS contra la covarianza robusta HC0."""
        rng = np.random.default_rng(62)
        X = rng.standard_normal((100, 2))
        y = 1.0 + X @ np.array([2.0, -1.0]) + (1.0 + np.abs(X[:, 0])) * rng.standard_normal(100)
        data = Dataset.from_arrays(X, y)
        result = gec_profile(data, ols_ef(2), y, np.ones(100), GecConfig())
        _, cov = sandwich_se(data, result, influence_parts(result, ols_ef(2), data))

        design = np.column_stack([np.ones(100), X])
        bread = np.linalg.inv(design.T @ design)
        residuals = y - design @ result.theta_hat
        meat = (design * residuals[:, None] ** 2).T @ design
        np.testing.assert_allclose(cov, bread @ meat @ bread, rtol=1e-7)

    def test_influence_values_are_centered(self):
        """Test de ψ centrado y Cov = Σψψᵀ/N²."""
        rng = np.random.default_rng(63)
        x = rng.standard_normal(150)
        pi = special.expit(0.7 + 0.5 * x)
        delta = (rng.random(150) < pi).astype(float)
        y = 2.0 + x + rng.standard_normal(150)
        data = Dataset.from_arrays(x, y, delta=delta)
        result = gec_profile(data, mean_ef(), 2.0 + x, pi, GecConfig())
        parts = influence_parts(result, mean_ef(), data)
        psi = influence_values(parts)
        np.testing.assert_allclose(psi.mean(axis=0), 0.0, atol=1e-12)
        se, _ = sandwich_se(data, result, parts)
        self.assertAlmostEqual(se[0], np.sqrt(np.sum(psi ** 2)) / 150, places=12)
        self.assertGreater(se[0], 0.0)

    def test_kappa_vanishes_with_exact_predictions(self):
        """Test de κ̂ ≈ 0 cuando M̂ = M: U − γ̂s se anula en los respondentes."""
        rng = np.random.default_rng(64)
        x = rng.standard_normal(200)
        design = with_intercept(x)
        delta = (rng.random(200) < special.expit(0.5 + 0.8 * x)).astype(float)
        y = 1.0 + 2.0 * x + rng.standard_normal(200)
        model = ResponseModel(fit_logistic(design, delta), design)
        data = Dataset.from_arrays(x, y, delta=delta)
        result = gec_profile(data, mean_ef(), y, model.pi_hat, GecConfig())
        parts = influence_parts(result, mean_ef(), data, model)
        self.assertFalse(parts.kappa_singular)
        self.assertEqual(parts.kappa_hat.shape, (1, 2))
        np.testing.assert_allclose(parts.kappa_hat, 0.0, atol=1e-5)


class BootstrapTest(SimpleTestCase):
    """Tests para bootstrap_se."""

    def setUp(self):
        """Configuración inicial para cada test."""
        rng = np.random.default_rng(65)
        self.y = rng.standard_normal(200)
        self.data = Dataset.from_arrays(np.zeros(200), self.y)

    def test_constant_estimator(self):
        """Test de SE nulo para un estimador constante."""
        np.testing.assert_array_equal(bootstrap_se(self.data, constant_estimate, B=50, seed=1), [0.0])

    def test_deterministic(self):
        """Test de resultados idénticos con la misma semilla, en serie y en paralelo."""
        first = bootstrap_se(self.data, sample_mean, B=60, seed=7)
        np.testing.assert_array_equal(first, bootstrap_se(self.data, sample_mean, B=60, seed=7))
        np.testing.assert_array_equal(first, bootstrap_se(self.data, sample_mean, B=60, seed=7, n_jobs=2))
        self.assertFalse(np.array_equal(first, bootstrap_se(self.data, sample_mean, B=60, seed=8)))

    def test_minimum_replicates(self):
        """Test de B por debajo del mínimo."""
        with self.assertRaises(ConfigError):
            bootstrap_se(self.data, sample_mean, B=49)

    def test_too_many_failures(self):
        """Test de remuestras que fallan todas."""
        with self.assertRaises(TooManyFailures):
            bootstrap_se(self.data, always_fails, B=50)

    def test_mean_standard_error(self):
        """Test del SE bootstrap de la media contra SD/√N."""
        se = bootstrap_se(self.data, sample_mean, B=2000, seed=3)
        expected = np.std(self.y) / np.sqrt(200)
        self.assertLess(abs(se[0] - expected), 0.1 * expected)
