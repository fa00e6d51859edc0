"""
Tests para la calibración por el dual y las funciones de estimación.
"""
import numpy as np
from django.test import SimpleTestCase
from scipy import linalg

from core.entropy import EntropyKind, get_entropy
from core.exceptions import DimensionMismatch, InfeasibleLambda, RankDeficientRespondents, TooFewRespondents

from .calibration import (
    CalibrationProblem,
    build_covariates,
    dual_gradient,
    dual_hessian,
    dual_value,
    solve_weights,
)
from .estimand import mean_ef, misscov_ef, ols_ef, solve_weighted_ee


def ipw_recoverable_instance(kind, rng, n_resp=100, n_nonresp=100, low=0.3):
    """
    Instancia donde ω = 1/π̂ cumple la restricción de desesgo.

    Los no respondentes comparten un π̂ elegido para que
    Σ_resp g(1/π̂)/π̂ = Σ_todos g(1/π̂).
    """
    spec = get_entropy(kind)
    pi_resp = rng.uniform(low, 0.9, n_resp)
    g_resp = spec.debias_covariate(pi_resp)
    g_nonresp = (np.sum(g_resp / pi_resp) - np.sum(g_resp)) / n_nonresp
    pi_nonresp = 1.0 / spec.g_inverse(g_nonresp)
    delta = np.concatenate([np.ones(n_resp), np.zeros(n_nonresp)])
    pi = np.concatenate([pi_resp, np.full(n_nonresp, pi_nonresp)])
    return delta, pi


def random_problem(rng, kind="et", n=50, normalization=True, p=2):
    delta = (rng.random(n) < 0.6).astype(float)
    delta[:10] = 1.0
    b = rng.standard_normal((n, p))
    pi = rng.uniform(0.2, 0.9, n)
    return CalibrationProblem.create(delta, b, pi, kind, include_normalization=normalization)


class CalibrationCovariatesTest(SimpleTestCase):
    """Tests para CalibrationProblem y build_covariates."""

    def test_et_rows(self):
        """Test de filas (1, log 2) con ET y π ≡ 0.5."""
        problem = CalibrationProblem.create(np.ones(4), None, 0.5, "et", include_normalization=True)
        s = build_covariates(problem, check_rank=False)
        np.testing.assert_allclose(s, np.tile([1.0, np.log(2.0)], (4, 1)))
        with self.assertRaises(RankDeficientRespondents):
            build_covariates(problem)

    def test_el_debias_column(self):
        """Test de la columna de desesgo de EL: −π."""
        problem = CalibrationProblem.create(np.ones(2), None, np.array([0.2, 0.8]), "el")
        np.testing.assert_allclose(build_covariates(problem), [[-0.2], [-0.8]])

    def test_collinear_balance_and_debias(self):
        """Test de b idéntica a la columna de desesgo."""
        rng = np.random.default_rng(1)
        pi = rng.uniform(0.2, 0.9, 20)
        problem = CalibrationProblem.create(np.ones(20), -np.log(pi), pi, "et")
        with self.assertRaises(RankDeficientRespondents):
            build_covariates(problem)

    def test_invalid_inputs(self):
        """Test de π̂ fuera de (0, 1] y δ ≡ 0."""
        with self.assertRaises(DimensionMismatch):
            CalibrationProblem.create(np.ones(3), None, np.array([0.5, 0.0, 0.5]), "et")
        with self.assertRaises(TooFewRespondents):
            CalibrationProblem.create(np.zeros(3), None, 0.5, "et")
        with self.assertRaises(DimensionMismatch):
            CalibrationProblem.create(np.ones(3), np.ones((2, 1)), 0.5, "et")


class DualFunctionsTest(SimpleTestCase):
    """Tests para el valor, gradiente y hessiano del dual."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.rng = np.random.default_rng(21)
        self.problem = random_problem(self.rng)
        self.s = build_covariates(self.problem)

    def test_value_at_zero(self):
        """Test de ρ(0): 0 para SQ y n_resp/N para ET."""
        sq = random_problem(np.random.default_rng(2), kind="sq")
        self.assertAlmostEqual(dual_value(sq, build_covariates(sq), np.zeros(4)), 0.0, places=14)
        n_resp = self.problem.respondents.sum()
        self.assertAlmostEqual(dual_value(self.problem, self.s, np.zeros(4)), n_resp / self.problem.n, places=14)

    def test_gradient_at_zero_with_normalization(self):
        """Test del primer componente del gradiente ET en 0: (n_resp − N)/N."""
        gradient = dual_gradient(self.problem, self.s, np.zeros(4))
        expected = (self.problem.respondents.sum() - self.problem.n) / self.problem.n
        self.assertAlmostEqual(gradient[0], expected, places=14)

    def test_gradient_matches_finite_differences(self):
        """Test del gradiente contra diferencias centrales del valor."""
        lam = 0.1 * self.rng.standard_normal(4)
        h = 1e-6
        numeric = [
            (dual_value(self.problem, self.s, lam + h * e) - dual_value(self.problem, self.s, lam - h * e)) / (2 * h)
            for e in np.eye(4)
        ]
        np.testing.assert_allclose(dual_gradient(self.problem, self.s, lam), numeric, atol=1e-7)

    def test_hessian_matches_finite_differences(self):
        """Test del hessiano contra diferencias centrales del gradiente."""
        lam = 0.1 * self.rng.standard_normal(4)
        h = 1e-6
        numeric = np.column_stack(
            [
                (dual_gradient(self.problem, self.s, lam + h * e) - dual_gradient(self.problem, self.s, lam - h * e))
                / (2 * h)
                for e in np.eye(4)
            ]
        )
        np.testing.assert_allclose(dual_hessian(self.problem, self.s, lam), numeric, atol=1e-7)

    def test_sq_hessian(self):
        """Test del hessiano SQ: (1/N) Σ δ s sᵀ."""
        sq = random_problem(np.random.default_rng(3), kind="sq")
        s = build_covariates(sq)
        expected = s[sq.respondents].T @ s[sq.respondents] / sq.n
        np.testing.assert_allclose(dual_hessian(sq, s, np.ones(4)), expected, atol=1e-14)

    def test_infeasible_lambda(self):
        """Test de λ fuera del dominio dual de EL."""
        el = random_problem(np.random.default_rng(4), kind="el")
        with self.assertRaises(InfeasibleLambda):
            dual_value(el, build_covariates(el), np.zeros(4))


class SolveWeightsTest(SimpleTestCase):
    """Tests para solve_weights."""

    def test_debiasing_recovers_ipw(self):
        """Test de ω = 1/π̂ con sólo la restricción de desesgo, para cada entropía."""
        rng = np.random.default_rng(31)
        for kind in EntropyKind:
            for _ in range(50):
                delta, pi = ipw_recoverable_instance(kind, rng)
                self.assertTrue(np.all((pi > 0) & (pi <= 1)), msg=str(kind))
                solution = solve_weights(CalibrationProblem.create(delta, None, pi, kind), grad_tol=1e-12)
                resp = delta == 1
                np.testing.assert_allclose(solution.weights[resp], 1.0 / pi[resp], rtol=0, atol=1e-8, err_msg=str(kind))
                np.testing.assert_array_equal(solution.weights[~resp], 0.0)

    def test_sq_closed_form(self):
        """Test de SQ contra λ = (Σ δ s sᵀ)⁻¹ Σ s."""
        rng = np.random.default_rng(32)
        for trial in range(50):
            problem = random_problem(rng, kind="sq", normalization=bool(trial % 2))
            s = build_covariates(problem)
            s_r = s[problem.respondents]
            expected = linalg.solve(s_r.T @ s_r, s.sum(axis=0))
            solution = solve_weights(problem)
            np.testing.assert_allclose(solution.lambda_, expected, rtol=1e-8, atol=1e-10)

    def test_constraints_hold(self):
        """Test de factibilidad primal y de residuos iguales al gradiente dual."""
        rng = np.random.default_rng(33)
        for kind in EntropyKind:
            problem = random_problem(rng, kind=kind, n=200)
            solution = solve_weights(problem)
            self.assertTrue(solution.converged)
            self.assertLessEqual(solution.max_residual, 1e-7)
            np.testing.assert_allclose(
                solution.constraint_residuals,
                dual_gradient(problem, solution.covariates, solution.lambda_),
                atol=1e-12,
            )
            self.assertTrue(np.all(solution.weights[problem.respondents] > 0) or kind is EntropyKind.SQ)

    def test_el_weights_positive(self):
        """Test de EL: ν < 0 y pesos positivos en la solución."""
        problem = random_problem(np.random.default_rng(34), kind="el", n=30)
        solution = solve_weights(problem)
        nu = solution.covariates[problem.respondents] @ solution.lambda_
        self.assertTrue(np.all(nu < 0))
        self.assertTrue(np.all(solution.weights[problem.respondents] > 0))

    def test_all_respondents_with_normalization(self):
        """Test de δ ≡ 1: ω ≡ 1 y λᵀs ≡ g(1)."""
        rng = np.random.default_rng(35)
        problem = CalibrationProblem.create(
            np.ones(6), rng.standard_normal(6), rng.uniform(0.2, 0.9, 6), "el", include_normalization=True
        )
        solution = solve_weights(problem)
        np.testing.assert_allclose(solution.weights, 1.0, atol=1e-8)
        np.testing.assert_allclose(solution.covariates @ solution.lambda_, -1.0, atol=1e-8)

    def test_fast_path(self):
        """Test de δ ≡ 1 sin normalización: ω ≡ 1 sin iterar."""
        rng = np.random.default_rng(36)
        problem = CalibrationProblem.create(np.ones(8), rng.standard_normal(8), rng.uniform(0.2, 0.9, 8), "et")
        solution = solve_weights(problem)
        np.testing.assert_array_equal(solution.weights, 1.0)
        self.assertEqual(solution.report.iterations, 0)

    def test_debias_scale_invariance(self):
        """Test de que reescalar la columna de desesgo no cambia los pesos."""
        rng = np.random.default_rng(37)
        base = random_problem(rng, n=200)
        scaled = CalibrationProblem.create(base.delta, base.b, base.pi_hat, "et", True, debias_scale=10.0)
        first = solve_weights(base, grad_tol=1e-12)
        second = solve_weights(scaled, grad_tol=1e-12)
        np.testing.assert_allclose(second.weights, first.weights, rtol=1e-8)
        self.assertAlmostEqual(second.lambda_[-1], first.lambda_[-1] / 10.0, places=7)

    def test_entropy_optimality(self):
        """Test de que ningún ω factible tiene menor entropía."""
        rng = np.random.default_rng(38)
        for kind in EntropyKind:
            # 5 respondentes y 3 no respondentes, con ω = 1/π̂ factible
            if kind is EntropyKind.SQ:
                delta = np.concatenate([np.ones(5), np.zeros(3)])
                pi = rng.uniform(0.6, 0.9, 8)
            else:
                delta, pi = ipw_recoverable_instance(kind, rng, n_resp=5, n_nonresp=3, low=0.6)
            b_resp = rng.standard_normal(5)
            b = np.concatenate([b_resp, np.full(3, np.sum(b_resp * (1.0 / pi[:5] - 1.0)) / 3)])
            problem = CalibrationProblem.create(delta, b, pi, kind)
            solution = solve_weights(problem)
            spec = get_entropy(kind)
            resp = problem.respondents
            omega = solution.weights[resp]
            basis = linalg.null_space(solution.covariates[resp].T)
            best = np.sum(spec.G(omega))
            for _ in range(1000):
                candidate = omega + basis @ (0.05 * rng.standard_normal(basis.shape[1]))
                if not spec.omega_feasible(candidate):
                    continue
                self.assertGreaterEqual(np.sum(spec.G(candidate)), best - 1e-10, msg=str(kind))


class EstimatingFunctionTest(SimpleTestCase):
    """Tests para mean_ef, ols_ef y misscov_ef."""

    def test_mean(self):
        """Test de U = y − θ."""
        ef = mean_ef()
        np.testing.assert_allclose(ef.u_at(np.array([1.0]), np.array([3.0])), [2.0])
        np.testing.assert_allclose(ef.jac_at(np.array([1.0]), np.array([3.0])), [[-1.0]])

    def test_ols_example(self):
        """Test de U = (y − x̃ᵀβ)x̃ en un registro."""
        ef = ols_ef(1)
        np.testing.assert_allclose(ef.u_at(np.array([0.0, 1.0]), np.array([2.0, 3.0])), [1.0, 2.0])
        np.testing.assert_allclose(ef.jac_at(np.array([0.0, 1.0]), np.array([2.0, 3.0])), [[-1.0, -2.0], [-2.0, -4.0]])
        self.assertEqual(ef.coef_names, ("beta0", "beta1"))

    def test_jacobian_matches_finite_differences(self):
        """Test del jacobiano de misscov por diferencias centrales."""
        ef = misscov_ef()
        rng = np.random.default_rng(41)
        z = rng.standard_normal(3)
        theta = rng.standard_normal(3)
        h = 1e-6
        numeric = np.column_stack([(ef.u_at(theta + h * e, z) - ef.u_at(theta - h * e, z)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(ef.jac_at(theta, z), numeric, atol=1e-7)

    def test_misscov_assemble(self):
        """Test del orden del registro (x1, x2, y)."""
        ef = misscov_ef()
        Z = ef.assemble(np.array([[0.5, 2.0]]), np.array([[1.0]]))
        np.testing.assert_allclose(Z, [[0.5, 1.0, 2.0]])

    def test_unit_weights_give_ols(self):
        """Test de Σ U = 0 con pesos unitarios: OLS."""
        rng = np.random.default_rng(42)
        X = rng.standard_normal((50, 2))
        y = 1.0 + X @ np.array([2.0, -1.0]) + rng.standard_normal(50)
        ef = ols_ef(2)
        theta, norm = solve_weighted_ee(ef, ef.assemble(X, y), np.ones(50))
        design = np.hstack([np.ones((50, 1)), X])
        expected, *_ = linalg.lstsq(design, y)
        np.testing.assert_allclose(theta, expected, atol=1e-10)
        self.assertLessEqual(norm, 1e-10)
