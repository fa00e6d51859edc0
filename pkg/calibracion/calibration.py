"""
Calibración por entropía generalizada vía el problema dual.

Los pesos de los respondentes minimizan Σ δ G(ω) sujetos a las restricciones
de balanceo (Σ δ ω b = Σ b) y de desesgo (Σ δ ω g(1/π̂) = Σ g(1/π̂)). El dual

    ρ(λ) = (1/N) Σ δ F(λᵀs) − (1/N) Σ λᵀs

se minimiza con Newton y los pesos salen de ω = g⁻¹(λᵀs).
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from config import constants
from core.entropy import EntropyKind, get_entropy
from core.exceptions import (
    DimensionMismatch,
    InfeasibleLambda,
    InfeasibleStart,
    RankDeficientRespondents,
    TooFewRespondents,
)
from core.optim import ObjectiveOracle, SolveReport, minimize_convex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationProblem:
    delta: np.ndarray
    b: np.ndarray
    pi_hat: np.ndarray
    entropy: object
    include_normalization: bool = False
    debias_scale: float = 1.0

    @classmethod
    def create(cls, delta, b, pi_hat, entropy, include_normalization=False, debias_scale=1.0):
        """
        Valida y normaliza los insumos del problema.

        b puede ser None o tener cero columnas (sólo desesgo).
        """
        delta = np.asarray(delta, dtype=float).ravel()
        n = delta.shape[0]
        pi_hat = np.broadcast_to(np.asarray(pi_hat, dtype=float), (n,)).copy()
        if b is None:
            b = np.empty((n, 0))
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if b.shape[0] != n:
            raise DimensionMismatch(f"b tiene {b.shape[0]} filas para {n} unidades")
        if not np.all((pi_hat > 0.0) & (pi_hat <= 1.0)):
            raise DimensionMismatch("π̂ debe estar en (0, 1] para todas las unidades")
        if not delta.any():
            raise TooFewRespondents("No hay respondentes (δ ≡ 0)")
        if debias_scale <= 0:
            raise DimensionMismatch("La escala de la columna de desesgo debe ser positiva")
        return cls(delta, b, pi_hat, get_entropy(entropy), bool(include_normalization), float(debias_scale))

    @property
    def n(self):
        return self.delta.shape[0]

    @property
    def respondents(self):
        return self.delta == 1

    @property
    def dim(self):
        return self.b.shape[1] + 1 + int(self.include_normalization)


@dataclass(frozen=True)
class WeightSolution:
    """
    Solución de la calibración.

    weights tiene largo N: g⁻¹(λᵀs_i) para respondentes y 0 para el resto.
    """

    lambda_: np.ndarray
    weights: np.ndarray
    constraint_residuals: np.ndarray
    report: SolveReport
    covariates: np.ndarray

    @property
    def converged(self):
        return self.report.converged

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.constraint_residuals)))


def build_covariates(problem, check_rank=True):
    """
    Matriz s (N × dim): [1 opcional | columnas de b | escala·g(1/π̂)].

    Raises:
        RankDeficientRespondents: Gram de las filas respondentes mal condicionada
    """
    columns = []
    if problem.include_normalization:
        columns.append(np.ones((problem.n, 1)))
    columns.append(problem.b)
    debias = problem.debias_scale * problem.entropy.debias_covariate(problem.pi_hat)
    columns.append(np.asarray(debias, dtype=float).reshape(-1, 1))
    s = np.hstack(columns)

    if check_rank:
        s_r = s[problem.respondents]
        gram = s_r.T @ s_r
        condition = np.linalg.cond(gram) if s_r.shape[0] >= s.shape[1] else np.inf
        if not np.isfinite(condition) or condition > constants.RANK_CONDITION_MAX:
            raise RankDeficientRespondents(
                f"Covariables de calibración colineales entre respondentes (cond={condition:.3g})"
            )
    return s


def _respondent_nu(problem, s, lambda_):
    nu = s[problem.respondents] @ np.asarray(lambda_, dtype=float)
    if not problem.entropy.nu_feasible(nu):
        raise InfeasibleLambda(f"λᵀs fuera del dominio dual de {problem.entropy.kind}")
    return nu


def dual_value(problem, s, lambda_):
    """ρ(λ) = (1/N)[Σ δ F(λᵀs) − Σ λᵀs]."""
    nu = _respondent_nu(problem, s, lambda_)
    total = s.sum(axis=0) @ np.asarray(lambda_, dtype=float)
    return float((np.sum(problem.entropy.F(nu)) - total) / problem.n)


def dual_gradient(problem, s, lambda_):
    """Residuos de las restricciones escalados por 1/N."""
    nu = _respondent_nu(problem, s, lambda_)
    return (s[problem.respondents].T @ problem.entropy.g_inverse(nu) - s.sum(axis=0)) / problem.n


def dual_hessian(problem, s, lambda_):
    nu = _respondent_nu(problem, s, lambda_)
    s_r = s[problem.respondents]
    return (s_r * problem.entropy.f_prime(nu)[:, None]).T @ s_r / problem.n


def _dual_oracle(problem, s):
    s_r = s[problem.respondents]

    def feasible_at(lambda_):
        return problem.entropy.nu_feasible(s_r @ lambda_)

    return ObjectiveOracle(
        value_at=lambda lam: dual_value(problem, s, lam),
        gradient_at=lambda lam: dual_gradient(problem, s, lam),
        hessian_at=lambda lam: dual_hessian(problem, s, lam),
        feasible_at=feasible_at,
    )


def starting_lambda(problem, s):
    """
    λ⁰ factible. SQ y ET arrancan en 0; EL y HD en (0, …, 0, c) con la columna
    de desesgo (negativa para ambas) llevando λᵀs al semieje negativo.
    """
    dim = s.shape[1]
    if problem.entropy.kind in (EntropyKind.SQ, EntropyKind.ET):
        return np.zeros(dim)

    s_r = s[problem.respondents]
    candidate = np.zeros(dim)
    candidate[-1] = 1.0
    for _ in range(constants.START_SCAN_STEPS):
        if problem.entropy.nu_feasible(s_r @ candidate):
            return candidate
        candidate[-1] *= 2.0
    raise InfeasibleStart(f"No se encontró λ inicial factible para {problem.entropy.kind}")


def _fast_path(problem, s):
    """Sin no respondentes ni normalización: ω ≡ 1 satisface todas las restricciones."""
    target = np.full(problem.n, problem.entropy.g(1.0))
    lambda_, *_ = linalg.lstsq(s, target)
    weights = np.ones(problem.n)
    report = SolveReport(lambda_, 0, 0.0, True, 0)
    return WeightSolution(lambda_, weights, np.zeros(s.shape[1]), report, s)


def solve_weights(problem, s=None, start=None, grad_tol=constants.DUAL_GRAD_TOL, max_iter=constants.DEFAULT_MAX_ITER):
    """
    Resuelve la calibración por el dual.

    Args:
        problem: CalibrationProblem
        s: Covariables ya construidas (se construyen si es None)
        start: λ inicial opcional (se ignora si no es factible)
        grad_tol: Tolerancia sobre el gradiente dual escalado

    Returns:
        WeightSolution
    """
    if problem.respondents.all() and not problem.include_normalization:
        return _fast_path(problem, s if s is not None else build_covariates(problem, check_rank=False))
    if s is None:
        s = build_covariates(problem)

    s_r = s[problem.respondents]
    if start is None or not problem.entropy.nu_feasible(s_r @ np.asarray(start, dtype=float)):
        start = starting_lambda(problem, s)

    report = minimize_convex(_dual_oracle(problem, s), start, grad_tol=grad_tol, max_iter=max_iter)
    lambda_ = report.solution
    weights = np.zeros(problem.n)
    weights[problem.respondents] = problem.entropy.g_inverse(s_r @ lambda_)
    residuals = (s.T @ weights - s.sum(axis=0)) / problem.n

    if report.converged and np.max(np.abs(residuals)) > constants.CONSTRAINT_TOL:
        logger.warning(f"Restricciones con residuo {np.max(np.abs(residuals)):.3g} pese a converger")
    logger.debug(
        f"Calibración {problem.entropy.kind}: {report.iterations} iteraciones, "
        f"ω en [{weights[problem.respondents].min():.4g}, {weights[problem.respondents].max():.4g}]"
    )
    return WeightSolution(lambda_, weights, residuals, report, s)
