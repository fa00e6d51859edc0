"""
Newton amortiguado para objetivos convexos suaves con dominio abierto.

Lo usan el problema dual de calibración, el ajuste del propensity score y
las ecuaciones de estimación (vía find_root).
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from config import constants
from core.exceptions import (
    DomainError,
    DualOverflowError,
    InfeasibleStart,
    LineSearchStall,
    SingularJacobian,
)

logger = logging.getLogger(__name__)


def _always_feasible(x):
    return True


@dataclass(frozen=True)
class ObjectiveOracle:
    """Objetivo con gradiente, hessiano y predicado de factibilidad."""

    value_at: Callable
    gradient_at: Callable
    hessian_at: Callable
    feasible_at: Callable = field(default=_always_feasible)


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    iterations: int
    final_gradient_norm: float
    converged: bool
    step_halvings_total: int
    value: float = float("nan")
    values: tuple = ()


def newton_direction(hessian, gradient):
    """
    Resuelve H d = −∇ por Cholesky; si la factorización falla aplica el
    corrimiento de Levenberg H + τI con τ creciendo ×10.
    """
    dim = gradient.shape[0]
    try:
        factor = linalg.cho_factor(hessian, check_finite=True)
        return linalg.cho_solve(factor, -gradient), 0.0
    except (linalg.LinAlgError, ValueError):
        pass

    trace = float(np.trace(hessian))
    tau = constants.LEVENBERG_INITIAL * (trace / dim if trace > 0 else 1.0)
    identity = np.eye(dim)
    for _ in range(constants.LEVENBERG_MAX_TRIES):
        try:
            factor = linalg.cho_factor(hessian + tau * identity, check_finite=True)
            logger.info(f"Hessiano no factorizable, corrimiento de Levenberg τ={tau:.3g}")
            return linalg.cho_solve(factor, -gradient), tau
        except (linalg.LinAlgError, ValueError):
            tau *= constants.LEVENBERG_GROWTH
    raise SingularJacobian("No se pudo factorizar el hessiano ni con corrimiento de Levenberg")


def _safe_value(oracle, x):
    """Valor en x, o None si x no es factible o el objetivo desborda."""
    if not oracle.feasible_at(x):
        return None
    try:
        value = oracle.value_at(x)
    except (DualOverflowError, DomainError, FloatingPointError):
        return None
    if not np.isfinite(value):
        return None
    return float(value)


def minimize_convex(oracle, start, grad_tol=constants.DUAL_GRAD_TOL, max_iter=constants.DEFAULT_MAX_ITER):
    """
    Minimiza un objetivo convexo con pasos de Newton y backtracking de Armijo.

    Args:
        oracle: ObjectiveOracle del problema
        start: Punto inicial (debe ser factible)
        grad_tol: Tolerancia sobre ‖∇‖∞
        max_iter: Máximo de iteraciones de Newton

    Returns:
        SolveReport; converged=False si se agotaron las iteraciones

    Raises:
        InfeasibleStart: el punto inicial no está en el dominio
        LineSearchStall: 60 reducciones sin descenso suficiente
    """
    x = np.array(start, dtype=float)
    if grad_tol <= 0:
        raise ValueError("grad_tol debe ser positivo")
    fx = _safe_value(oracle, x)
    if fx is None:
        raise InfeasibleStart(f"Punto inicial fuera del dominio: {x}")

    halvings_total = 0
    values = [fx]
    grad = np.asarray(oracle.gradient_at(x), dtype=float)
    grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0

    for iteration in range(max_iter + 1):
        if grad_norm <= grad_tol:
            return SolveReport(x, iteration, grad_norm, True, halvings_total, fx, tuple(values))
        if iteration == max_iter:
            break

        direction, _ = newton_direction(np.asarray(oracle.hessian_at(x), dtype=float), grad)
        slope = float(grad @ direction)
        # Ruido de redondeo admitido en la comparación de Armijo
        slack = 10.0 * np.finfo(float).eps * (1.0 + abs(fx))

        step = 1.0
        accepted = False
        for _ in range(constants.MAX_HALVINGS):
            trial = x + step * direction
            f_trial = _safe_value(oracle, trial)
            if f_trial is not None and f_trial <= fx + constants.ARMIJO_CONSTANT * step * slope + slack:
                accepted = True
                break
            step *= constants.STEP_SHRINK
            halvings_total += 1
        if not accepted:
            raise LineSearchStall(
                f"Búsqueda lineal sin descenso tras {constants.MAX_HALVINGS} reducciones "
                f"(iteración {iteration}, ‖∇‖∞={grad_norm:.3g})"
            )

        x, fx = trial, f_trial
        values.append(fx)
        grad = np.asarray(oracle.gradient_at(x), dtype=float)
        grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0

    logger.warning(f"Newton sin converger tras {max_iter} iteraciones (‖∇‖∞={grad_norm:.3g})")
    return SolveReport(x, max_iter, grad_norm, False, halvings_total, fx, tuple(values))


def find_root(residual_at, jacobian_at, start, tol=constants.EE_ROOT_TOL, max_iter=constants.DEFAULT_MAX_ITER):
    """
    Raíz de r(θ) = 0 por Newton amortiguado sobre ‖r‖∞.

    Returns:
        Tupla (theta, iteraciones, ‖r‖∞ final)

    Raises:
        SingularJacobian: el jacobiano no es invertible
    """
    theta = np.array(start, dtype=float)
    residual = np.asarray(residual_at(theta), dtype=float)
    norm = float(np.max(np.abs(residual)))

    for iteration in range(max_iter):
        if norm <= tol:
            return theta, iteration, norm
        jacobian = np.atleast_2d(np.asarray(jacobian_at(theta), dtype=float))
        try:
            if np.linalg.cond(jacobian) > 1.0 / np.finfo(float).eps:
                raise linalg.LinAlgError("jacobiano mal condicionado")
            step = linalg.solve(jacobian, -residual)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularJacobian(f"Jacobiano singular en θ={theta}: {e}")

        t = 1.0
        for _ in range(constants.MAX_HALVINGS):
            trial = theta + t * step
            trial_residual = np.asarray(residual_at(trial), dtype=float)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if np.isfinite(trial_norm) and trial_norm < norm:
                break
            t *= constants.STEP_SHRINK
        else:
            # Sin mejora: el residuo ya está en el piso de redondeo
            return theta, iteration, norm
        theta, residual, norm = trial, trial_residual, trial_norm

    return theta, max_iter, norm
