"""
Modelo de propensity score: regresión logística por máxima verosimilitud.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from config import constants
from core.exceptions import (
    DimensionMismatch,
    DualOverflowError,
    LineSearchStall,
    OneClassError,
    SeparationError,
    SingularJacobian,
)
from core.optim import ObjectiveOracle, minimize_convex

logger = logging.getLogger(__name__)


def with_intercept(X):
    """Antepone la columna de unos a la matriz de covariables."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.hstack([np.ones((X.shape[0], 1)), X])


@dataclass(frozen=True)
class PsFit:
    phi: np.ndarray
    design_columns: tuple
    loglik: float
    converged: bool
    truncation: float = 0.0


def _check_columns(fit, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != fit.phi.shape[0]:
        raise DimensionMismatch(
            f"La matriz tiene {X.shape[1]} columnas y el ajuste {fit.phi.shape[0]} coeficientes"
        )
    return X


def _logistic_oracle(X, delta):
    n = X.shape[0]

    def value_at(phi):
        eta = X @ phi
        return float(np.sum(np.logaddexp(0.0, eta) - delta * eta) / n)

    def gradient_at(phi):
        return X.T @ (special.expit(X @ phi) - delta) / n

    def hessian_at(phi):
        p = special.expit(X @ phi)
        return (X * (p * (1.0 - p))[:, None]).T @ X / n

    return ObjectiveOracle(value_at, gradient_at, hessian_at)


def fit_logistic(X, delta, columns=None, grad_tol=constants.PS_GRAD_TOL, max_iter=constants.DEFAULT_MAX_ITER,
                 truncation=0.0):
    """
    Ajusta P(δ=1 | x) = expit(xᵀφ) maximizando la log-verosimilitud.

    Args:
        X: Matriz de diseño (con intercepto si corresponde)
        delta: Vector 0/1
        columns: Nombres de las columnas del diseño
        truncation: ε para recortar π̂ a [ε, 1−ε] al predecir (0 = sin recorte)

    Returns:
        PsFit

    Raises:
        OneClassError: δ constante
        SeparationError: el predictor lineal satura (|η| > 30) sin converger o con
            δ perfectamente clasificado por el signo de η
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    delta = np.asarray(delta, dtype=float).ravel()
    n, p = X.shape
    if delta.shape[0] != n:
        raise DimensionMismatch(f"δ tiene {delta.shape[0]} entradas para {n} filas")
    if np.all(delta == delta[0]):
        raise OneClassError(f"δ toma un único valor ({delta[0]:g}); no se puede ajustar el propensity score")
    if n < p + 1:
        raise DimensionMismatch(f"Se necesitan al menos {p + 1} filas para {p} coeficientes")

    oracle = _logistic_oracle(X, delta)
    try:
        report = minimize_convex(oracle, np.zeros(p), grad_tol=grad_tol, max_iter=max_iter)
        phi = report.solution
        converged = report.converged
    except (LineSearchStall, SingularJacobian, DualOverflowError) as e:
        logger.warning(f"Ajuste logístico interrumpido: {e}")
        raise SeparationError(f"El ajuste logístico no converge (posible separación): {e}")

    eta = X @ phi
    max_eta = float(np.max(np.abs(eta)))
    if max_eta > constants.SEPARATION_ETA:
        # Con separación completa el gradiente se anula recién con |η| saturado
        separated = bool(np.all((eta > 0) == (delta == 1)))
        if separated or not converged:
            raise SeparationError(
                f"Separación en el propensity score: |η| llega a {max_eta:.1f} "
                f"({'clasificación perfecta' if separated else 'sin converger'})"
            )
        logger.warning(
            f"Propensity score con |η| = {max_eta:.1f} en alguna unidad; el ajuste convergió y se conserva"
        )
    if not converged:
        logger.warning(f"Ajuste logístico sin converger; ‖∇‖∞={report.final_gradient_norm:.3g}")

    if columns is None:
        columns = tuple(f"x{j}" for j in range(p))
    loglik = -n * oracle.value_at(phi)
    logger.info(f"Propensity score ajustado en {report.iterations} iteraciones, loglik={loglik:.4f}")
    return PsFit(np.asarray(phi, dtype=float), tuple(columns), float(loglik), bool(converged), float(truncation))


def _truncate(pi, truncation):
    if truncation > 0:
        return np.clip(pi, truncation, 1.0 - truncation)
    return pi


def predict_pi(fit, X):
    """Probabilidades expit(Xφ), recortadas si el ajuste lo pide."""
    X = _check_columns(fit, X)
    return _truncate(special.expit(X @ fit.phi), fit.truncation)


def h_vector(fit, x):
    """
    h(φ) = (1 − π)⁻¹ ∂π/∂φ; para el modelo logístico vale π·x.
    Acepta una fila o una matriz (una fila por unidad).
    """
    x_arr = np.asarray(x, dtype=float)
    X = _check_columns(fit, x_arr)
    h = special.expit(X @ fit.phi)[:, None] * X
    return h[0] if x_arr.ndim == 1 else h


@dataclass(frozen=True)
class ResponseModel:
    """
    Propensity score visto desde un indicador de respuesta.

    Con complement=True el indicador es 1 − T: π = 1 − expit(xᵀφ) y
    h = −(1 − expit(xᵀφ))·x.
    """

    fit: PsFit
    design: np.ndarray
    complement: bool = False

    @property
    def dim(self):
        return self.fit.phi.shape[0]

    def pi_at(self, phi):
        p = special.expit(self.design @ phi)
        if self.complement:
            p = 1.0 - p
        return _truncate(p, self.fit.truncation)

    def h_at(self, phi):
        p = special.expit(self.design @ phi)
        factor = -(1.0 - p) if self.complement else p
        return factor[:, None] * self.design

    @property
    def pi_hat(self):
        return self.pi_at(self.fit.phi)
