"""
Estimador GEC: calibración dependiente de θ con optimización de perfil en dos
lazos, y el camino directo cuando las covariables de balanceo no dependen de θ.

Lazo interno: λ̂(θ) = argmin ρ(λ, θ) con b_i(θ) = U(θ; O_i, M̂_i).
Lazo externo: Newton amortiguado sobre Φ(θ) = (1/N) Σ δ ω̂_i(θ) U(θ; z_i),
con jacobiano por diferencias centrales. El gradiente envolvente del perfil
L(θ) = ρ(λ̂(θ), θ) se reporta como diagnóstico.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from calibracion.baselines import aipw_estimate, cc_estimate
from calibracion.calibration import CalibrationProblem, build_covariates, dual_value, solve_weights
from calibracion.estimand import solve_weighted_ee, weighted_ee
from config import constants
from core.entropy import EntropyKind
from core.exceptions import ConfigError, GecalError, OuterDivergence, SingularJacobian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GecConfig:
    entropy: EntropyKind = EntropyKind.ET
    theta_tol: float = constants.THETA_TOL
    lambda_tol: float = constants.DUAL_GRAD_TOL
    max_outer: int = constants.DEFAULT_MAX_OUTER
    normalization: bool = False
    fd_step: float = constants.OUTER_FD_STEP
    max_iter: int = constants.DEFAULT_MAX_ITER

    def __post_init__(self):
        object.__setattr__(self, "entropy", EntropyKind.from_token(self.entropy))
        if self.theta_tol <= 0 or self.lambda_tol <= 0 or self.fd_step <= 0:
            raise ConfigError("Las tolerancias y el paso de diferencias deben ser positivos")
        if self.max_outer < 1:
            raise ConfigError("max_outer debe ser al menos 1")

    @property
    def inner_tol(self):
        """El lazo interno se resuelve 100 veces más ajustado que el externo."""
        return min(self.lambda_tol, self.theta_tol / 100.0)


@dataclass(frozen=True)
class GecResult:
    theta_hat: np.ndarray
    weight_solution: object
    ee_residual_norm: float
    outer_iterations: int
    problem: CalibrationProblem
    envelope_gradient: Optional[np.ndarray] = None
    converged: bool = True

    @property
    def weights(self):
        return self.weight_solution.weights


def _records(data, ef):
    return ef.assemble(data.observed, data.missing)


def weighted_ee_residual(ef, Z, weights, theta):
    """Φ(θ) = (1/N) Σ δ ω U(θ; z)."""
    residual_at, _ = weighted_ee(ef, Z, weights)
    return residual_at(theta)


def envelope_gradient(problem, solution, ef, theta, Z_hat):
    """
    Gradiente de Danskin del perfil: (1/N) Σ (δω − 1)·(∂b_i/∂θ)ᵀ λ_b.
    Sólo las columnas de b dependen de θ.
    """
    offset = int(problem.include_normalization)
    lambda_b = solution.lambda_[offset:offset + problem.b.shape[1]]
    jacobians = ef.jac_at(theta, Z_hat)
    factor = solution.weights * problem.delta - 1.0
    return np.einsum("i,ijk,j->k", factor, jacobians, lambda_b) / problem.n


def profile_value(data, ef, m_hat, pi_hat, config, theta):
    """L(θ) = min_λ ρ(λ, θ); lo usan los controles del gradiente envolvente."""
    Z_hat = ef.assemble(data.observed, m_hat)
    problem = CalibrationProblem.create(
        data.delta, ef.u_at(theta, Z_hat), pi_hat, config.entropy, config.normalization
    )
    s = build_covariates(problem, check_rank=False)
    solution = solve_weights(problem, s=s, grad_tol=config.inner_tol, max_iter=config.max_iter)
    return dual_value(problem, s, solution.lambda_)


class _ProfileState:
    """Resuelve el lazo interno en θ con arranque en caliente desde el último λ."""

    def __init__(self, data, ef, m_hat, pi_hat, config):
        self.data = data
        self.ef = ef
        self.pi_hat = pi_hat
        self.config = config
        self.Z = _records(data, ef)
        self.Z_hat = ef.assemble(data.observed, m_hat)
        self.last_lambda = None
        self.inner_solves = 0

    def solve(self, theta):
        problem = CalibrationProblem.create(
            self.data.delta,
            self.ef.u_at(theta, self.Z_hat),
            self.pi_hat,
            self.config.entropy,
            self.config.normalization,
        )
        solution = solve_weights(
            problem,
            start=self.last_lambda,
            grad_tol=self.config.inner_tol,
            max_iter=self.config.max_iter,
        )
        self.last_lambda = solution.lambda_
        self.inner_solves += 1
        return problem, solution

    def residual(self, theta):
        problem, solution = self.solve(theta)
        return weighted_ee_residual(self.ef, self.Z, solution.weights, theta), problem, solution

    def jacobian(self, theta):
        q = theta.shape[0]
        columns = []
        for j in range(q):
            h = self.config.fd_step * max(1.0, abs(theta[j]))
            step = np.zeros(q)
            step[j] = h
            plus, _, _ = self.residual(theta + step)
            minus, _, _ = self.residual(theta - step)
            columns.append((plus - minus) / (2.0 * h))
        return np.column_stack(columns)


def _initial_theta(data, ef, m_hat, pi_hat):
    try:
        return aipw_estimate(data, ef, pi_hat, m_hat)
    except GecalError as e:
        logger.info(f"AIPW no disponible como arranque ({e}); se usa casos completos")
        return cc_estimate(data, ef)


def gec_profile(data, ef, m_hat, pi_hat, config=None, theta_start=None):
    """
    Estimador GEC con calibración dependiente de θ.

    Args:
        data: Dataset
        ef: EstimatingFunction
        m_hat: Predicciones (cross-fit) de M para todas las unidades
        pi_hat: Propensity score estimado
        config: GecConfig
        theta_start: θ⁰ (por defecto AIPW, o casos completos si AIPW falla)

    Returns:
        GecResult

    Raises:
        OuterDivergence: se agotó max_outer sin cumplir el criterio de parada
    """
    config = config or GecConfig()
    state = _ProfileState(data, ef, m_hat, pi_hat, config)
    theta = np.array(
        theta_start if theta_start is not None else _initial_theta(data, ef, m_hat, pi_hat), dtype=float
    )

    residual, problem, solution = state.residual(theta)
    norm = float(np.max(np.abs(residual)))
    for outer in range(config.max_outer):
        if norm <= config.theta_tol:
            return _finish(state, theta, problem, solution, norm, outer)

        jacobian = state.jacobian(theta)
        try:
            step = linalg.solve(jacobian, -residual)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularJacobian(f"Jacobiano externo singular en θ={theta}: {e}")

        t = 1.0
        for _ in range(constants.MAX_HALVINGS):
            trial = theta + t * step
            trial_residual, trial_problem, trial_solution = state.residual(trial)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            t *= constants.STEP_SHRINK
        else:
            logger.warning(
                f"Lazo externo estancado: {constants.MAX_HALVINGS} reducciones sin bajar ‖Φ‖∞={norm:.3g}"
            )
            return _finish(state, theta, problem, solution, norm, outer)
        theta, residual, problem, solution, norm = trial, trial_residual, trial_problem, trial_solution, trial_norm

        if np.max(np.abs(t * step)) <= config.theta_tol:
            return _finish(state, theta, problem, solution, norm, outer + 1)

    raise OuterDivergence(
        f"El lazo externo no convergió en {config.max_outer} iteraciones (‖Φ‖∞={norm:.3g})"
    )


def _finish(state, theta, problem, solution, norm, outer_iterations):
    gradient = envelope_gradient(problem, solution, state.ef, theta, state.Z_hat)
    converged = bool(solution.converged and norm <= state.config.theta_tol)
    if not converged:
        logger.warning(
            f"GEC {state.config.entropy} sin converger: ‖Φ‖∞={norm:.3g} "
            f"(tolerancia {state.config.theta_tol:.3g}), lazo interno convergido={solution.converged}"
        )
    logger.info(
        f"GEC {state.config.entropy}: θ̂={np.array2string(theta, precision=6)} en {outer_iterations} "
        f"iteraciones externas ({state.inner_solves} resoluciones internas)"
    )
    return GecResult(
        theta_hat=theta,
        weight_solution=solution,
        ee_residual_norm=norm,
        outer_iterations=outer_iterations,
        problem=problem,
        envelope_gradient=gradient,
        converged=converged,
    )


def gec_direct(data, ef, b_matrix, pi_hat, config=None, start=None):
    """
    Camino directo: b no depende de θ, se calibra una vez y se resuelve
    Σ δ ω̂ U(θ) = 0 por Newton.
    """
    config = config or GecConfig()
    problem = CalibrationProblem.create(data.delta, b_matrix, pi_hat, config.entropy, config.normalization)
    solution = solve_weights(problem, grad_tol=config.inner_tol, max_iter=config.max_iter)
    theta, norm = solve_weighted_ee(ef, _records(data, ef), solution.weights, start=start)
    logger.info(f"GEC directo {config.entropy}: θ̂={np.array2string(theta, precision=6)}")
    return GecResult(
        theta_hat=theta,
        weight_solution=solution,
        ee_residual_norm=float(norm),
        outer_iterations=0,
        problem=problem,
        converged=bool(solution.converged and norm <= config.theta_tol),
    )
