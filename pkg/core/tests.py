"""
Tests para las entropías y el optimizador de Newton del módulo core.
"""
import numpy as np
from django.test import SimpleTestCase

from .entropy import EntropyKind, F_value, G_value, debias_covariate, g_inverse, g_value, get_entropy
from .exceptions import ConfigError, DomainError, DualOverflowError, InfeasibleStart, LineSearchStall
from .optim import ObjectiveOracle, find_root, minimize_convex, newton_direction

# Intervalos interiores de prueba para ν por entropía
NU_RANGES = {
    EntropyKind.SQ: (-3.0, 3.0),
    EntropyKind.EL: (-5.0, -0.2),
    EntropyKind.ET: (-3.0, 3.0),
    EntropyKind.HD: (-5.0, -0.2),
}


class EntropyValuesTest(SimpleTestCase):
    """Tests para los valores puntuales de G, g, g⁻¹, F y g(1/π)."""

    def test_G_examples(self):
        """Test de G en puntos conocidos."""
        self.assertAlmostEqual(G_value("sq", 2.0), 2.0, places=12)
        self.assertAlmostEqual(G_value("et", 1.0), -1.0, places=12)
        self.assertAlmostEqual(G_value("hd", 4.0), -2.0, places=12)
        self.assertAlmostEqual(G_value("el", 1.0), 0.0, places=12)

    def test_g_examples(self):
        """Test de la derivada g en puntos conocidos."""
        self.assertAlmostEqual(g_value("el", 0.5), -2.0, places=12)
        self.assertAlmostEqual(g_value("et", np.e), 1.0, places=12)
        self.assertAlmostEqual(g_value("hd", 1.0), -0.5, places=12)
        self.assertAlmostEqual(g_value("sq", 3.0), 3.0, places=12)

    def test_g_inverse_examples(self):
        """Test de g⁻¹ en puntos conocidos."""
        self.assertAlmostEqual(g_inverse("et", 0.0), 1.0, places=12)
        self.assertAlmostEqual(g_inverse("el", -2.0), 0.5, places=12)
        self.assertAlmostEqual(g_inverse("hd", -0.5), 1.0, places=12)

    def test_F_examples(self):
        """Test del conjugado F en puntos conocidos."""
        self.assertAlmostEqual(F_value("sq", 3.0), 4.5, places=12)
        self.assertAlmostEqual(F_value("et", 0.0), 1.0, places=12)
        self.assertAlmostEqual(F_value("hd", -0.5), 0.5, places=12)
        self.assertAlmostEqual(F_value("el", -1.0), -1.0, places=12)

    def test_debias_covariate_examples(self):
        """Test de la covariable de desesgo g(1/π)."""
        self.assertAlmostEqual(debias_covariate("el", 0.25), -0.25, places=12)
        self.assertAlmostEqual(debias_covariate("et", 0.5), np.log(2.0), places=12)
        self.assertAlmostEqual(debias_covariate("sq", 0.2), 5.0, places=12)
        self.assertAlmostEqual(debias_covariate("hd", 0.36), -0.3, places=12)

    def test_arrays_keep_shape(self):
        """Test de que los arrays devuelven arrays del mismo largo."""
        out = g_inverse("et", np.array([0.0, 1.0, -1.0]))
        self.assertEqual(out.shape, (3,))
        np.testing.assert_allclose(out, np.exp([0.0, 1.0, -1.0]))

    def test_domain_errors(self):
        """Test de argumentos fuera del dominio."""
        with self.assertRaises(DomainError):
            g_inverse("el", 0.0)
        with self.assertRaises(DomainError):
            g_inverse("hd", 0.5)
        with self.assertRaises(DomainError):
            g_value("et", -1.0)
        with self.assertRaises(DomainError):
            debias_covariate("et", 0.0)
        with self.assertRaises(DomainError):
            debias_covariate("et", 1.5)

    def test_et_overflow(self):
        """Test de la guardia de overflow de exp en ET."""
        with self.assertRaises(DualOverflowError):
            g_inverse("et", 701.0)
        self.assertFalse(get_entropy("et").nu_feasible(np.array([0.0, 701.0])))

    def test_from_token(self):
        """Test de tokens de entropía sin distinguir mayúsculas."""
        self.assertIs(EntropyKind.from_token("Et"), EntropyKind.ET)
        self.assertIs(EntropyKind.from_token(" HD "), EntropyKind.HD)
        with self.assertRaises(ConfigError):
            EntropyKind.from_token("kl")


class EntropyPropertiesTest(SimpleTestCase):
    """Tests de propiedades de la familia de entropías."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.rng = np.random.default_rng(11)

    def test_conjugate_derivative_is_g_inverse(self):
        """Test de F′(ν) = g⁻¹(ν) por diferencias centrales."""
        h = 1e-6
        for kind, (low, high) in NU_RANGES.items():
            spec = get_entropy(kind)
            nu = self.rng.uniform(low, high, size=200)
            derivative = (spec.F(nu + h) - spec.F(nu - h)) / (2 * h)
            np.testing.assert_allclose(derivative, spec.g_inverse(nu), rtol=1e-5, atol=1e-6, err_msg=str(kind))

    def test_g_inverse_round_trip(self):
        """Test de g(g⁻¹(ν)) = ν."""
        for kind, (low, high) in NU_RANGES.items():
            spec = get_entropy(kind)
            nu = self.rng.uniform(low, high, size=200)
            np.testing.assert_allclose(spec.g(spec.g_inverse(nu)), nu, rtol=1e-10, atol=1e-12)

    def test_g_strictly_increasing(self):
        """Test de monotonía estricta de g en su dominio."""
        omega = np.linspace(0.05, 10.0, 500)
        for kind in EntropyKind:
            self.assertTrue(np.all(np.diff(get_entropy(kind).g(omega)) > 0), msg=str(kind))

    def test_fenchel_equality(self):
        """Test de G(ω) + F(g(ω)) = ω·g(ω)."""
        omega = self.rng.uniform(0.1, 5.0, size=200)
        for kind in EntropyKind:
            spec = get_entropy(kind)
            np.testing.assert_allclose(spec.G(omega) + spec.F(spec.g(omega)), omega * spec.g(omega), atol=1e-10)

    def test_f_prime_matches_derivative(self):
        """Test de f′ contra la derivada numérica de g⁻¹."""
        h = 1e-6
        for kind, (low, high) in NU_RANGES.items():
            spec = get_entropy(kind)
            nu = self.rng.uniform(low, high, size=50)
            derivative = (spec.g_inverse(nu + h) - spec.g_inverse(nu - h)) / (2 * h)
            np.testing.assert_allclose(spec.f_prime(nu), derivative, rtol=1e-5)


def _barrier_oracle():
    """f(x) = −log x + 10x, mínimo en x = 0.1, dominio x > 0."""
    return ObjectiveOracle(
        value_at=lambda x: float(-np.log(x[0]) + 10.0 * x[0]),
        gradient_at=lambda x: np.array([-1.0 / x[0] + 10.0]),
        hessian_at=lambda x: np.array([[1.0 / x[0] ** 2]]),
        feasible_at=lambda x: bool(x[0] > 0),
    )


class NewtonSolverTest(SimpleTestCase):
    """Tests para minimize_convex, newton_direction y find_root."""

    def test_quadratic_one_step(self):
        """Test de un cuadrático: Newton llega en un paso."""
        oracle = ObjectiveOracle(
            value_at=lambda x: float(0.5 * (x[0] - 3.0) ** 2),
            gradient_at=lambda x: np.array([x[0] - 3.0]),
            hessian_at=lambda x: np.array([[1.0]]),
        )
        report = minimize_convex(oracle, np.zeros(1))
        self.assertTrue(report.converged)
        self.assertEqual(report.iterations, 1)
        self.assertAlmostEqual(report.solution[0], 3.0, places=12)

    def test_feasibility_halving(self):
        """Test de reducciones de paso cuando Newton sale del dominio."""
        report = minimize_convex(_barrier_oracle(), np.array([1.0]))
        self.assertTrue(report.converged)
        self.assertGreaterEqual(report.step_halvings_total, 1)
        self.assertAlmostEqual(report.solution[0], 0.1, places=8)
        self.assertTrue(np.all(np.diff(report.values) <= 1e-12))

    def test_infeasible_start(self):
        """Test de punto inicial fuera del dominio."""
        with self.assertRaises(InfeasibleStart):
            minimize_convex(_barrier_oracle(), np.array([-1.0]))

    def test_line_search_stall(self):
        """Test de estancamiento cuando ningún paso reducido es factible."""
        oracle = ObjectiveOracle(
            value_at=lambda x: float(x[0] ** 2),
            gradient_at=lambda x: np.array([2.0 * x[0]]),
            hessian_at=lambda x: np.array([[1e-30]]),
            feasible_at=lambda x: bool(x[0] > 0),
        )
        with self.assertRaises(LineSearchStall):
            minimize_convex(oracle, np.array([1.0]))

    def test_line_search_trial_budget(self):
        """Test de 60 puntos de prueba por iteración antes de declarar estancamiento."""
        visited = []

        def feasible_at(x):
            visited.append(float(x[0]))
            return bool(x[0] > 0)

        oracle = ObjectiveOracle(
            value_at=lambda x: float(x[0] ** 2),
            gradient_at=lambda x: np.array([2.0 * x[0]]),
            hessian_at=lambda x: np.array([[1e-30]]),
            feasible_at=feasible_at,
        )
        with self.assertRaises(LineSearchStall):
            minimize_convex(oracle, np.array([1.0]))
        self.assertEqual(len(visited), 1 + 60)

    def test_max_iterations_reports_not_converged(self):
        """Test de agotar iteraciones: converged=False sin excepción."""
        report = minimize_convex(_barrier_oracle(), np.array([1.0]), max_iter=1)
        self.assertFalse(report.converged)
        self.assertEqual(report.iterations, 1)

    def test_levenberg_shift(self):
        """Test del corrimiento de Levenberg con hessiano singular."""
        direction, tau = newton_direction(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([1.0, 0.0]))
        self.assertGreater(tau, 0.0)
        self.assertAlmostEqual(direction[0], -1.0, places=6)
        self.assertAlmostEqual(direction[1], 0.0, places=12)

    def test_find_root_linear(self):
        """Test de find_root sobre un sistema lineal."""
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, 2.0])
        theta, _, norm = find_root(lambda t: A @ t - b, lambda t: A, np.zeros(2))
        np.testing.assert_allclose(theta, np.linalg.solve(A, b), atol=1e-12)
        self.assertLessEqual(norm, 1e-10)
