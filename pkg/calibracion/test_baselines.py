"""
Tests para los estimadores de referencia.
"""
import numpy as np
from django.test import SimpleTestCase

from core.dataset import Dataset
from core.exceptions import ConfigError, DataError, TooFewRespondents

from .baselines import BaselineKind, aipw_estimate, baseline_estimate, cc_estimate, full_estimate, ipw_estimate
from .estimand import mean_ef, ols_ef


class BaselineExamplesTest(SimpleTestCase):
    """Tests para Full, casos completos, IPW y AIPW sobre ejemplos chicos."""

    def test_full_mean(self):
        """Test de Full sobre (1, 2, 3)."""
        data = Dataset.from_arrays(np.zeros(3), [1.0, 2.0, 3.0])
        self.assertAlmostEqual(full_estimate(data, mean_ef())[0], 2.0, places=12)

    def test_full_ols(self):
        """Test de Full contra las ecuaciones normales."""
        rng = np.random.default_rng(50)
        X = rng.standard_normal((60, 2))
        y = 1.0 + X @ np.array([0.5, -1.5]) + rng.standard_normal(60)
        design = np.column_stack([np.ones(60), X])
        expected = np.linalg.solve(design.T @ design, design.T @ y)
        np.testing.assert_allclose(full_estimate(Dataset.from_arrays(X, y), ols_ef(2)), expected, atol=1e-10)

    def test_full_requires_complete_data(self):
        """Test de Full con M faltante."""
        with self.assertRaises(DataError):
            full_estimate(Dataset.from_arrays(np.zeros(2), [1.0, np.nan]), mean_ef())

    def test_complete_cases(self):
        """Test de casos completos con δ=(1,0,1) e y=(1,5,3)."""
        data = Dataset.from_arrays(np.zeros(3), [1.0, 5.0, 3.0], delta=[1, 0, 1])
        self.assertAlmostEqual(cc_estimate(data, mean_ef())[0], 2.0, places=12)

    def test_too_few_respondents(self):
        """Test de casos completos con menos respondentes que parámetros."""
        data = Dataset.from_arrays(np.arange(4.0), [1.0, np.nan, np.nan, np.nan])
        with self.assertRaises(TooFewRespondents):
            cc_estimate(data, ols_ef(1))

    def test_ipw(self):
        """Test de IPW con π̂ ≡ 0.5, δ=(1,0) e y=(4,·)."""
        data = Dataset.from_arrays(np.zeros(2), [4.0, np.nan])
        self.assertAlmostEqual(ipw_estimate(data, mean_ef(), 0.5)[0], 4.0, places=12)

    def test_aipw_closed_form(self):
        """Test de AIPW de la media contra (1/N)Σ[δy/π̂ − (δ−π̂)/π̂·ŷ]."""
        rng = np.random.default_rng(51)
        y = rng.standard_normal(10)
        delta = np.array([1, 1, 0, 1, 0, 1, 1, 0, 1, 1], dtype=float)
        pi = rng.uniform(0.3, 0.9, 10)
        y_hat = y + rng.standard_normal(10)
        data = Dataset.from_arrays(np.zeros(10), y, delta=delta)
        expected = np.mean(delta * np.where(delta == 1, y, 0.0) / pi - (delta - pi) / pi * y_hat)
        self.assertAlmostEqual(aipw_estimate(data, mean_ef(), pi, y_hat)[0], expected, places=10)

    def test_aipw_perfect_predictions(self):
        """Test de AIPW con M̂ = M: coincide con Full."""
        rng = np.random.default_rng(52)
        X = rng.standard_normal((80, 1))
        y = 2.0 - X[:, 0] + rng.standard_normal(80)
        delta = (rng.random(80) < 0.6).astype(float)
        pi = np.full(80, 0.6)
        data = Dataset.from_arrays(X, y, delta=delta)
        full = full_estimate(Dataset.from_arrays(X, y), ols_ef(1))
        np.testing.assert_allclose(aipw_estimate(data, ols_ef(1), pi, y), full, atol=1e-8)

    def test_aipw_without_predictions_is_ipw(self):
        """Test de AIPW con b ≡ 0: idéntico a IPW."""
        data = Dataset.from_arrays(np.zeros(4), [1.0, np.nan, 3.0, 7.0])
        pi = np.array([0.5, 0.4, 0.8, 0.9])
        np.testing.assert_array_equal(aipw_estimate(data, mean_ef(), pi), ipw_estimate(data, mean_ef(), pi))


class BaselineDispatchTest(SimpleTestCase):
    """Tests para baseline_estimate y BaselineKind."""

    def test_all_agree_on_complete_data(self):
        """Test de los cuatro métodos sobre datos completos con π̂ ≡ 1."""
        rng = np.random.default_rng(53)
        X = rng.standard_normal((50, 2))
        y = X @ np.array([1.0, 2.0]) + rng.standard_normal(50)
        data = Dataset.from_arrays(X, y)
        expected = full_estimate(data, ols_ef(2))
        for kind in BaselineKind:
            theta = baseline_estimate(kind, data, ols_ef(2), np.ones(50), y + 0.1, complete=data)
            np.testing.assert_allclose(theta, expected, atol=1e-10, err_msg=str(kind))

    def test_tokens(self):
        """Test de tokens: HT se mapea a IPW."""
        self.assertIs(BaselineKind.from_token("HT"), BaselineKind.IPW)
        self.assertIs(BaselineKind.from_token(" aipw "), BaselineKind.AIPW)
        with self.assertRaises(ConfigError):
            BaselineKind.from_token("cbps")

    def test_full_needs_complete_data(self):
        """Test de Full sin los datos completos de la simulación."""
        data = Dataset.from_arrays(np.zeros(2), [1.0, np.nan])
        with self.assertRaises(ConfigError):
            baseline_estimate("full", data, mean_ef(), 0.5)
