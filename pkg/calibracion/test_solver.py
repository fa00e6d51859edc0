"""
Tests para el estimador GEC: lazo de perfil, camino directo y gradiente envolvente.
"""
import numpy as np
from django.test import SimpleTestCase
from scipy import optimize, special

from core.dataset import Dataset
from core.entropy import EntropyKind
from core.exceptions import ConfigError, GecalError, OuterDivergence

from .baselines import cc_estimate, ipw_estimate
from .calibration import CalibrationProblem, solve_weights
from .estimand import mean_ef, ols_ef
from .solver import GecConfig, envelope_gradient, gec_direct, gec_profile, profile_value
from .tests import ipw_recoverable_instance
from .variance import influence_parts, sandwich_se


def mean_instance(seed, n=30):
    """Media con respuesta MAR en x; M̂ es una predicción lineal imperfecta."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    pi = special.expit(0.8 + 0.6 * x)
    delta = (rng.random(n) < pi).astype(float)
    delta[:6] = 1.0
    delta[-2:] = 0.0
    y = 1.0 + x + 0.5 * rng.standard_normal(n)
    m_hat = 1.0 + 0.9 * x
    return Dataset.from_arrays(x, y, delta=delta), m_hat, pi


def _profile_residual(data, m_hat, pi, theta):
    """Φ(θ) calculado a mano con una calibración nueva en cada θ."""
    problem = CalibrationProblem.create(data.delta, m_hat - theta, pi, "et")
    solution = solve_weights(problem, grad_tol=1e-12)
    y = np.nan_to_num(data.missing[:, 0])
    return solution.weights @ (y - theta) / data.n


class GecProfileTest(SimpleTestCase):
    """Tests para gec_profile."""

    def test_matches_bisection_root(self):
        """Test de θ̂ contra la raíz de Φ hallada por bisección con calibraciones independientes."""
        config = GecConfig(entropy="et", theta_tol=1e-10)
        compared = 0
        for seed in range(20):
            data, m_hat, pi = mean_instance(seed)
            center = float(cc_estimate(data, mean_ef())[0])
            grid = center + np.linspace(-2.0, 2.0, 81)
            try:
                values = np.array([_profile_residual(data, m_hat, pi, t) for t in grid])
                result = gec_profile(data, mean_ef(), m_hat, pi, config)
            except GecalError:
                continue
            changes = np.flatnonzero(np.sign(values[:-1]) != np.sign(values[1:]))
            if changes.size != 1:
                continue
            k = changes[0]
            root = optimize.brentq(
                lambda t: _profile_residual(data, m_hat, pi, t), grid[k], grid[k + 1], xtol=1e-13
            )
            self.assertAlmostEqual(result.theta_hat[0], root, delta=1e-7, msg=f"seed={seed}")
            compared += 1
        self.assertGreaterEqual(compared, 15)

    def test_normalized_mean_ignores_shift(self):
        """Test de invariancia de θ̂ ante sumar una constante a M̂ con normalización."""
        data, m_hat, pi = mean_instance(40, n=80)
        config = GecConfig(entropy="et", normalization=True)
        first = gec_profile(data, mean_ef(), m_hat, pi, config)
        shifted = gec_profile(data, mean_ef(), m_hat + 5.0, pi, config)
        self.assertAlmostEqual(first.theta_hat[0], shifted.theta_hat[0], delta=1e-8)

        weights = solve_weights(CalibrationProblem.create(data.delta, m_hat, pi, "et", True), grad_tol=1e-12).weights
        y = np.nan_to_num(data.missing[:, 0])
        self.assertAlmostEqual(first.theta_hat[0], weights @ y / weights.sum(), delta=1e-8)

    def test_all_respondents_mean(self):
        """Test de δ ≡ 1: θ̂ es la media muestral para cada entropía."""
        rng = np.random.default_rng(41)
        y = rng.standard_normal(25)
        data = Dataset.from_arrays(np.zeros(25), y)
        for kind in EntropyKind:
            result = gec_profile(data, mean_ef(), y + 0.3, np.ones(25), GecConfig(entropy=kind))
            self.assertAlmostEqual(result.theta_hat[0], y.mean(), delta=1e-9, msg=str(kind))
            np.testing.assert_array_equal(result.weights, 1.0)
            np.testing.assert_allclose(result.envelope_gradient, 0.0, atol=1e-12)

    def test_all_respondents_ols(self):
        """Test de δ ≡ 1 en OLS: θ̂ es la solución de mínimos cuadrados."""
        rng = np.random.default_rng(42)
        X = rng.standard_normal((40, 2))
        y = 0.5 + X @ np.array([1.0, -2.0]) + rng.standard_normal(40)
        data = Dataset.from_arrays(X, y)
        expected, *_ = np.linalg.lstsq(np.column_stack([np.ones(40), X]), y, rcond=None)
        result = gec_profile(data, ols_ef(2), y, np.ones(40), GecConfig())
        np.testing.assert_allclose(result.theta_hat, expected, atol=1e-8)
        direct = gec_direct(data, ols_ef(2), X, np.ones(40), GecConfig())
        np.testing.assert_allclose(direct.theta_hat, expected, atol=1e-8)

    def test_converged_result(self):
        """Test de residuo final y restricciones en la solución devuelta."""
        data, m_hat, pi = mean_instance(43, n=120)
        result = gec_profile(data, mean_ef(), m_hat, pi, GecConfig(entropy="hd"))
        self.assertTrue(result.converged)
        self.assertLessEqual(result.ee_residual_norm, 1e-6)
        self.assertLessEqual(result.weight_solution.max_residual, 1e-7)
        self.assertGreaterEqual(result.outer_iterations, 1)

    def test_unreachable_tolerance_not_converged(self):
        """Test de que un lazo externo estancado por redondeo no se reporta como convergido."""
        data, m_hat, pi = mean_instance(45)
        result = gec_profile(data, mean_ef(), m_hat, pi, GecConfig(entropy="et", theta_tol=1e-17))
        self.assertFalse(result.converged)
        self.assertTrue(np.isfinite(result.theta_hat[0]))
        self.assertLess(result.ee_residual_norm, 1e-8)

    def test_outer_divergence(self):
        """Test de OuterDivergence al agotar max_outer desde un θ lejano."""
        data, m_hat, pi = mean_instance(44, n=60)
        config = GecConfig(entropy="et", normalization=True, max_outer=1)
        with self.assertRaises(OuterDivergence):
            gec_profile(data, mean_ef(), m_hat, pi, config, theta_start=[50.0])

    def test_entropies_agree_at_large_n(self):
        """Test de SQ, EL, ET y HD a menos de 3 SE combinados entre sí con N = 5000 y π correcto."""
        rng = np.random.default_rng(49)
        n = 5000
        x = rng.standard_normal(n)
        pi = special.expit(0.5 + 0.8 * x)
        delta = (rng.random(n) < pi).astype(float)
        y = 1.0 + x + rng.standard_normal(n)
        data = Dataset.from_arrays(x, y, delta=delta)
        estimates = {}
        for kind in EntropyKind:
            result = gec_profile(data, mean_ef(), 1.0 + 0.9 * x, pi, GecConfig(entropy=kind))
            se, _ = sandwich_se(data, result, influence_parts(result, mean_ef(), data))
            estimates[kind] = (result.theta_hat[0], se[0])
        for a, (theta_a, se_a) in estimates.items():
            for b, (theta_b, se_b) in estimates.items():
                pooled = np.sqrt((se_a ** 2 + se_b ** 2) / 2.0)
                self.assertLessEqual(abs(theta_a - theta_b), 3.0 * pooled, msg=f"{a} vs {b}")


class GecDirectTest(SimpleTestCase):
    """Tests para gec_direct."""

    def test_matches_profile_with_normalization(self):
        """Test de que el camino directo coincide con el perfil si 1 está en la base."""
        data, m_hat, pi = mean_instance(45, n=100)
        config = GecConfig(entropy="el", normalization=True)
        profile = gec_profile(data, mean_ef(), m_hat, pi, config)
        direct = gec_direct(data, mean_ef(), m_hat, pi, config)
        self.assertAlmostEqual(profile.theta_hat[0], direct.theta_hat[0], delta=1e-7)
        self.assertEqual(direct.outer_iterations, 0)

    def test_debias_only_reduces_to_ipw(self):
        """Test de b vacía: θ̂ coincide con IPW cuando ω = 1/π̂ es factible."""
        rng = np.random.default_rng(46)
        for kind in EntropyKind:
            delta, pi = ipw_recoverable_instance(kind, rng, n_resp=60, n_nonresp=40)
            y = rng.standard_normal(100) + 2.0
            data = Dataset.from_arrays(np.zeros(100), y, delta=delta)
            config = GecConfig(entropy=kind, lambda_tol=1e-12)
            result = gec_direct(data, mean_ef(), None, pi, config)
            expected = ipw_estimate(data, mean_ef(), pi)
            self.assertAlmostEqual(result.theta_hat[0], expected[0], delta=1e-7, msg=str(kind))


class EnvelopeGradientTest(SimpleTestCase):
    """Tests para envelope_gradient y profile_value."""

    def assert_matches_finite_differences(self, data, ef, m_hat, pi, theta):
        config = GecConfig(entropy="et", theta_tol=1e-10)
        Z_hat = ef.assemble(data.observed, m_hat)
        problem = CalibrationProblem.create(data.delta, ef.u_at(theta, Z_hat), pi, "et")
        solution = solve_weights(problem, grad_tol=1e-12)
        gradient = envelope_gradient(problem, solution, ef, theta, Z_hat)
        step = 1e-5
        numeric = []
        for e in np.eye(theta.shape[0]):
            plus = profile_value(data, ef, m_hat, pi, config, theta + step * e)
            minus = profile_value(data, ef, m_hat, pi, config, theta - step * e)
            numeric.append((plus - minus) / (2.0 * step))
        np.testing.assert_allclose(gradient, numeric, atol=1e-6)

    def test_mean_target(self):
        """Test del gradiente envolvente de la media contra diferencias finitas."""
        data, m_hat, pi = mean_instance(47, n=80)
        theta = cc_estimate(data, mean_ef()) + 0.2
        self.assert_matches_finite_differences(data, mean_ef(), m_hat, pi, theta)

    def test_ols_target(self):
        """Test del gradiente envolvente de OLS contra diferencias finitas."""
        rng = np.random.default_rng(48)
        x = rng.standard_normal(200)
        pi = special.expit(0.5 + 0.5 * x)
        delta = (rng.random(200) < pi).astype(float)
        y = 1.0 + 2.0 * x + rng.standard_normal(200)
        data = Dataset.from_arrays(x, y, delta=delta)
        theta = cc_estimate(data, ols_ef(1)) + np.array([0.1, -0.1])
        self.assert_matches_finite_differences(data, ols_ef(1), 1.0 + 1.9 * x, pi, theta)


class GecConfigTest(SimpleTestCase):
    """Tests para GecConfig."""

    def test_invalid_values(self):
        """Test de tolerancias, max_outer y entropía inválidos."""
        with self.assertRaises(ConfigError):
            GecConfig(theta_tol=0.0)
        with self.assertRaises(ConfigError):
            GecConfig(max_outer=0)
        with self.assertRaises(ConfigError):
            GecConfig(entropy="kl")

    def test_inner_tolerance(self):
        """Test del lazo interno más ajustado que el externo."""
        self.assertAlmostEqual(GecConfig(theta_tol=1e-6).inner_tol, 1e-9, delta=1e-20)
        self.assertAlmostEqual(GecConfig(theta_tol=1e-10).inner_tol, 1e-12, delta=1e-20)
        self.assertIs(GecConfig(entropy="HD").entropy, EntropyKind.HD)
