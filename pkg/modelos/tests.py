"""
Tests para el propensity score logístico y los predictores con cross-fitting.
"""
import numpy as np
from django.test import SimpleTestCase
from scipy import optimize, special

from core.dataset import Dataset
from core.exceptions import ConfigError, DimensionMismatch, EmptyTrainingFold, OneClassError, SeparationError

from .predict import (
    FoldAssignment,
    PredictorFamily,
    SplineSpec,
    cross_fit_predictions,
    fit_predictor,
    make_folds,
    predict_with,
    spline_basis,
)
from .psmodel import PsFit, ResponseModel, fit_logistic, h_vector, predict_pi, with_intercept


class LogisticFitTest(SimpleTestCase):
    """Tests para fit_logistic y las predicciones del propensity score."""

    def test_intercept_only(self):
        """Test de intercepto solo: φ = logit(media de δ)."""
        delta = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0], dtype=float)
        fit = fit_logistic(np.ones((10, 1)), delta)
        self.assertAlmostEqual(fit.phi[0], special.logit(0.4), places=6)
        np.testing.assert_allclose(predict_pi(fit, np.ones((3, 1))), 0.4, atol=1e-6)

    def test_matches_direct_optimizer(self):
        """Test del ajuste contra un optimizador genérico de la log-verosimilitud."""
        X = with_intercept(np.array([-1.0, 0.0, 1.0, 2.0, 3.0]))
        delta = np.array([0, 1, 0, 1, 1], dtype=float)
        fit = fit_logistic(X, delta)

        def negative_loglik(phi):
            eta = X @ phi
            return np.sum(np.logaddexp(0.0, eta) - delta * eta)

        oracle = optimize.minimize(negative_loglik, np.zeros(2), method="BFGS", options={"gtol": 1e-10})
        np.testing.assert_allclose(fit.phi, oracle.x, atol=1e-4)
        score = X.T @ (delta - special.expit(X @ fit.phi))
        np.testing.assert_allclose(score, 0.0, atol=1e-7)

    def test_separation(self):
        """Test de separación completa."""
        X = with_intercept(np.array([-1.0, 0.0, 1.0, 2.0]))
        with self.assertRaises(SeparationError):
            fit_logistic(X, np.array([0, 0, 1, 1], dtype=float))

    def test_high_leverage_unit(self):
        """Test de un ajuste convergido con una unidad de |η| > 30: se conserva con un aviso."""
        rng = np.random.default_rng(8)
        x = np.append(rng.standard_normal(500), 120.0)
        delta = (rng.random(501) < special.expit(0.5 * x)).astype(float)
        delta[-1] = 1.0
        with self.assertLogs("modelos.psmodel", level="WARNING"):
            fit = fit_logistic(with_intercept(x), delta)
        self.assertTrue(fit.converged)
        self.assertGreater(abs(fit.phi[1] * 120.0 + fit.phi[0]), 30.0)
        self.assertAlmostEqual(fit.phi[1], 0.5, delta=0.3)

    def test_one_class(self):
        """Test de δ constante."""
        with self.assertRaises(OneClassError):
            fit_logistic(np.ones((4, 1)), np.ones(4))

    def test_permutation_invariance(self):
        """Test de invariancia ante permutar las filas."""
        rng = np.random.default_rng(3)
        X = with_intercept(rng.standard_normal((200, 2)))
        delta = (rng.random(200) < special.expit(X @ np.array([0.2, 1.0, -0.5]))).astype(float)
        order = rng.permutation(200)
        np.testing.assert_allclose(fit_logistic(X, delta).phi, fit_logistic(X[order], delta[order]).phi, atol=1e-8)

    def test_score_identity(self):
        """Test de (1/N)Σ(δ/π − 1)h = (1/N)Σ(δ − π)x en el modelo logístico."""
        rng = np.random.default_rng(4)
        X = with_intercept(rng.standard_normal((300, 2)))
        delta = (rng.random(300) < 0.6).astype(float)
        fit = fit_logistic(X, delta)
        pi = predict_pi(fit, X)
        left = ((delta / pi - 1.0)[:, None] * h_vector(fit, X)).mean(axis=0)
        right = ((delta - pi)[:, None] * X).mean(axis=0)
        np.testing.assert_allclose(left, right, atol=1e-12)
        np.testing.assert_allclose(right, 0.0, atol=1e-8)


class PropensityHelpersTest(SimpleTestCase):
    """Tests para predict_pi, h_vector y ResponseModel."""

    def test_predict_pi_examples(self):
        """Test de π en φ = 0 y el chequeo de dimensiones."""
        fit = PsFit(np.zeros(1), ("x",), 0.0, True)
        self.assertAlmostEqual(predict_pi(fit, np.array([[3.0]]))[0], 0.5)
        with self.assertRaises(DimensionMismatch):
            predict_pi(fit, np.ones((2, 2)))

    def test_h_vector_examples(self):
        """Test de h = π·x."""
        fit = PsFit(np.zeros(1), ("x",), 0.0, True)
        np.testing.assert_allclose(h_vector(fit, np.array([1.0])), [0.5])
        fit = PsFit(np.array([0.0, 1.0]), ("c", "x"), 0.0, True)
        np.testing.assert_allclose(h_vector(fit, np.array([1.0, 2.0])), special.expit(2.0) * np.array([1.0, 2.0]))

    def test_h_vector_matches_derivative(self):
        """Test de h = (1 − π)⁻¹ ∂π/∂φ por diferencias finitas, directo y complementado."""
        rng = np.random.default_rng(6)
        design = with_intercept(rng.standard_normal((5, 2)))
        phi = np.array([0.3, -0.7, 0.4])
        fit = PsFit(phi, ("c", "a", "b"), 0.0, True)
        step = 1e-6
        for complement in (False, True):
            model = ResponseModel(fit, design, complement=complement)
            pi = model.pi_at(phi)
            derivative = np.column_stack(
                [(model.pi_at(phi + step * e) - model.pi_at(phi - step * e)) / (2 * step) for e in np.eye(3)]
            )
            np.testing.assert_allclose(model.h_at(phi), derivative / (1.0 - pi)[:, None], rtol=1e-6, atol=1e-9)

    def test_truncation(self):
        """Test del recorte de π̂."""
        fit = PsFit(np.array([10.0]), ("c",), 0.0, True, truncation=0.05)
        self.assertAlmostEqual(predict_pi(fit, np.ones((1, 1)))[0], 0.95)


class PredictorTest(SimpleTestCase):
    """Tests para las familias de predictores."""

    def test_linear_exact(self):
        """Test de ajuste lineal exacto."""
        O = np.linspace(-1, 1, 20)
        predictor = fit_predictor("linear", O, 2.0 + 3.0 * O)
        np.testing.assert_allclose(predictor.coefficients, [2.0, 3.0], atol=1e-10)
        np.testing.assert_allclose(predict_with(predictor, np.array([0.5])), [3.5], atol=1e-10)

    def test_logistic_matches_mean(self):
        """Test de que las probabilidades ajustadas promedian la media de M."""
        rng = np.random.default_rng(8)
        O = rng.standard_normal((200, 1))
        M = (rng.random(200) < special.expit(0.5 * O[:, 0])).astype(float)
        predictor = fit_predictor("logistic", O, M)
        self.assertAlmostEqual(predict_with(predictor, O).mean(), M.mean(), places=7)

    def test_logistic_requires_binary(self):
        """Test de M no binaria con la familia logística."""
        with self.assertRaises(ConfigError):
            fit_predictor("logistic", np.arange(5.0), np.arange(5.0))

    def test_spline_fits_smooth_curve(self):
        """Test de la familia spline sobre una curva suave."""
        O = np.linspace(-2.0, 2.0, 200)
        M = np.sin(np.pi * O / 2.0)
        predictor = fit_predictor("spline", O, M, n_knots=5)
        self.assertEqual(predictor.coefficients.shape[0], 7)
        rmse = np.sqrt(np.mean((predict_with(predictor, O) - M) ** 2))
        self.assertLessEqual(rmse, 0.03 * M.std())

    def test_spline_beats_linear_on_cubic(self):
        """Test de que el spline mejora al lineal con una señal cúbica."""
        O = np.linspace(-2.0, 2.0, 200)
        M = O ** 3
        spline = np.sqrt(np.mean((predict_with(fit_predictor("spline", O, M), O) - M) ** 2))
        linear = np.sqrt(np.mean((predict_with(fit_predictor("linear", O, M), O) - M) ** 2))
        self.assertLess(spline, 0.5 * linear)

    def test_spline_basis_centered_and_linear_outside(self):
        """Test de la base centrada en entrenamiento y lineal fuera del rango de los nudos."""
        O = np.linspace(-2.0, 2.0, 101)
        spec = SplineSpec.fit(O, n_knots=5)
        basis = spline_basis(O, spec)
        self.assertEqual(basis.shape, (101, 6))
        np.testing.assert_allclose(basis.mean(axis=0), 0.0, atol=1e-10)
        outside = spline_basis(np.array([3.0, 4.0, 5.0]), spec)
        np.testing.assert_allclose(outside[1] - outside[0], outside[2] - outside[1], atol=1e-5)

        predictor = fit_predictor("spline", O, np.sin(O))
        edge = predict_with(predictor, np.array([2.0, 2.5, 3.0]))
        self.assertAlmostEqual(edge[1] - edge[0], edge[2] - edge[1], delta=1e-5)

    def test_family_tokens(self):
        """Test de tokens de familia."""
        self.assertIs(PredictorFamily.from_token("Spline"), PredictorFamily.SPLINE_ADDITIVE)
        with self.assertRaises(ConfigError):
            PredictorFamily.from_token("forest")


class CrossFitTest(SimpleTestCase):
    """Tests para make_folds y cross_fit_predictions."""

    def test_fold_sizes(self):
        """Test de tamaños de folds balanceados."""
        folds = make_folds(4, 2, seed=1)
        self.assertEqual(sorted(np.bincount(folds.fold_of)[1:]), [2, 2])
        folds = make_folds(10, 3, seed=1)
        self.assertEqual(sorted(np.bincount(folds.fold_of)[1:]), [3, 3, 4])
        np.testing.assert_array_equal(folds.fold_of, make_folds(10, 3, seed=1).fold_of)
        self.assertEqual(sorted(np.bincount(make_folds(5, 5).fold_of)[1:]), [1] * 5)

    def test_invalid_fold_count(self):
        """Test de K fuera de rango."""
        with self.assertRaises(ConfigError):
            make_folds(10, 1)
        with self.assertRaises(ConfigError):
            make_folds(3, 4)

    def test_noise_free_linear(self):
        """Test de predicciones exactas sin ruido y con todos respondiendo."""
        O = np.linspace(0, 1, 12)
        M = 1.0 - 2.0 * O
        data = Dataset.from_arrays(O, M)
        m_hat = cross_fit_predictions(data, "linear", make_folds(12, 2, seed=3))
        np.testing.assert_allclose(m_hat, M, atol=1e-8)

    def test_hand_computed_folds(self):
        """Test contra ajustes por fold calculados a mano."""
        O = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
        M = np.array([1.0, 2.5, 2.0, 4.5, np.nan, 6.0])
        folds = FoldAssignment(np.array([1, 2, 1, 2, 1, 2]), 2, 0)
        m_hat = cross_fit_predictions(Dataset.from_arrays(O, M), "linear", folds)
        for k in (1, 2):
            train = (folds.fold_of != k) & ~np.isnan(M)
            slope, intercept = np.polyfit(O[train], M[train], 1)
            members = folds.fold_of == k
            np.testing.assert_allclose(m_hat[members], intercept + slope * O[members], atol=1e-10)
        self.assertTrue(np.isfinite(m_hat[4]))

    def test_no_leakage(self):
        """Test de que cambiar M_i no altera M̂_i."""
        rng = np.random.default_rng(9)
        O = rng.standard_normal(40)
        M = O + rng.standard_normal(40)
        folds = make_folds(40, 4, seed=2)
        base = cross_fit_predictions(Dataset.from_arrays(O, M), "linear", folds)
        poisoned = M.copy()
        poisoned[7] += 1000.0
        changed = cross_fit_predictions(Dataset.from_arrays(O, poisoned), "linear", folds)
        self.assertAlmostEqual(changed[7], base[7], places=12)
        self.assertFalse(np.allclose(changed, base))

    def test_empty_training_fold(self):
        """Test de un fold cuyo complemento no tiene respondentes."""
        folds = FoldAssignment(np.array([1, 1, 2, 2]), 2, 0)
        M = np.array([1.0, 2.0, np.nan, np.nan])
        with self.assertRaises(EmptyTrainingFold):
            cross_fit_predictions(Dataset.from_arrays(np.arange(4.0), M), "linear", folds)
