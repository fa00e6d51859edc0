"""
Funciones de estimación U(θ; z) con su jacobiano en θ.

Cada EstimatingFunction sabe armar el registro completo z a partir de la parte
observada O y de la parte M (real o predicha), de modo que la función de
calibración es b(θ; O) = U(θ; O, M̂).
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from config import constants
from core.exceptions import DimensionMismatch
from core.optim import find_root


def _rows(z):
    z = np.asarray(z, dtype=float)
    return (z.reshape(1, -1), True) if z.ndim == 1 else (z, False)


@dataclass(frozen=True)
class EstimatingFunction:
    name: str
    q: int
    _u: Callable
    _jac: Callable
    assemble: Callable
    coef_names: tuple

    def u_at(self, theta, z):
        """U(θ; z); z de una fila devuelve un vector q, una matriz devuelve N×q."""
        Z, single = _rows(z)
        out = self._u(np.asarray(theta, dtype=float), Z)
        return out[0] if single else out

    def jac_at(self, theta, z):
        """∂U/∂θᵀ; q×q para una fila, N×q×q para una matriz."""
        Z, single = _rows(z)
        out = self._jac(np.asarray(theta, dtype=float), Z)
        return out[0] if single else out

    def b_at(self, theta, o, m_hat):
        return self.u_at(theta, self.assemble(o, m_hat))


def _as_columns(values):
    arr = np.asarray(values, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def mean_ef():
    """U = y − θ; el registro completo es sólo y."""

    def u(theta, Z):
        return Z[:, :1] - theta[0]

    def jac(theta, Z):
        return -np.ones((Z.shape[0], 1, 1))

    def assemble(o, m):
        return _as_columns(m)[:, :1]

    return EstimatingFunction("mean", 1, u, jac, assemble, ("mean",))


def _ols_parts(with_intercept):
    def design(Z):
        X = Z[:, :-1]
        return np.hstack([np.ones((Z.shape[0], 1)), X]) if with_intercept else X

    def u(theta, Z):
        X = design(Z)
        return (Z[:, -1] - X @ theta)[:, None] * X

    def jac(theta, Z):
        X = design(Z)
        return -X[:, :, None] * X[:, None, :]

    return u, jac


def ols_ef(p, with_intercept=True, names=None):
    """
    U = (y − x̃ᵀβ)·x̃ con x̃ = (1, x) si hay intercepto.
    El registro completo es z = (x₁, …, x_p, y); O = x y M = y.
    """
    if p < 1:
        raise DimensionMismatch("ols_ef requiere al menos una covariable")
    u, jac = _ols_parts(with_intercept)
    q = p + int(with_intercept)
    if names is None:
        names = tuple(f"beta{j}" for j in range(q)) if with_intercept else tuple(f"beta{j + 1}" for j in range(q))

    def assemble(o, m):
        return np.hstack([_as_columns(o), _as_columns(m)[:, :1]])

    return EstimatingFunction("ols", q, u, jac, assemble, tuple(names))


def misscov_ef(p1=1, p2=1, names=None):
    """
    Regresión lineal con covariables faltantes: z = (x₁, x₂, y), O = (x₁, y), M = x₂.
    """
    u, jac = _ols_parts(True)
    q = 1 + p1 + p2
    if names is None:
        names = tuple(f"beta{j}" for j in range(q))

    def assemble(o, m):
        o = _as_columns(o)
        return np.hstack([o[:, :p1], _as_columns(m)[:, :p2], o[:, p1:p1 + 1]])

    return EstimatingFunction("misscov", q, u, jac, assemble, tuple(names))


def weighted_ee(ef, Z, weights):
    """Residuo (1/N)Σ w U y su jacobiano, usando sólo filas con peso no nulo."""
    weights = np.asarray(weights, dtype=float).ravel()
    active = weights != 0
    Z_active = np.asarray(Z, dtype=float)[active]
    w_active = weights[active]
    n = weights.shape[0]

    def residual_at(theta):
        return w_active @ ef.u_at(theta, Z_active) / n

    def jacobian_at(theta):
        return np.tensordot(w_active, ef.jac_at(theta, Z_active), axes=1) / n

    return residual_at, jacobian_at


def solve_weighted_ee(ef, Z, weights, start=None, tol=constants.EE_ROOT_TOL):
    """
    Raíz de Σ w_i U(θ; z_i) = 0.

    Returns:
        Tupla (theta, ‖residuo‖∞)
    """
    residual_at, jacobian_at = weighted_ee(ef, Z, weights)
    if start is None:
        start = np.zeros(ef.q)
    theta, _, norm = find_root(residual_at, jacobian_at, start, tol=tol)
    return theta, norm
