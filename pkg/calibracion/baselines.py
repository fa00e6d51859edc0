"""
Estimadores de referencia: Full (oráculo de simulación), casos completos,
IPW (Horvitz–Thompson) y AIPW.
"""
import enum
import logging

import numpy as np

from calibracion.estimand import solve_weighted_ee
from core.exceptions import ConfigError, DataError, TooFewRespondents
from core.optim import find_root

logger = logging.getLogger(__name__)


@enum.unique
class BaselineKind(enum.Enum):
    FULL = "full"
    CC = "cc"
    IPW = "ipw"
    AIPW = "aipw"

    @classmethod
    def from_token(cls, token):
        if isinstance(token, cls):
            return token
        token = str(token).strip().lower()
        if token == "ht":
            return cls.IPW
        try:
            return cls(token)
        except ValueError:
            raise ConfigError(f"Estimador de referencia desconocido '{token}'")

    def __str__(self):
        return self.name


def _records(data, ef):
    return ef.assemble(data.observed, data.missing)


def _check_pi(data, pi_hat):
    pi_hat = np.broadcast_to(np.asarray(pi_hat, dtype=float), (data.n,))
    if np.any(pi_hat[data.respondents] <= 0):
        raise DataError("π̂ debe ser positivo en todos los respondentes")
    return pi_hat


def full_estimate(data, ef):
    """Raíz de Σ U(θ; z_i) = 0 con todos los M observados."""
    Z = _records(data, ef)
    if not np.all(np.isfinite(Z)):
        raise DataError("El estimador Full requiere M observado en todas las unidades")
    theta, _ = solve_weighted_ee(ef, Z, np.ones(data.n))
    return theta


def cc_estimate(data, ef):
    """Raíz de la ecuación de estimación sobre los casos completos."""
    if data.n_respondents < ef.q:
        raise TooFewRespondents(f"{data.n_respondents} respondentes no alcanzan para {ef.q} parámetros")
    theta, _ = solve_weighted_ee(ef, _records(data, ef), data.delta)
    return theta


def ipw_estimate(data, ef, pi_hat):
    """Raíz de Σ (δ/π̂) U(θ; z) = 0, sin normalizar los pesos."""
    pi_hat = _check_pi(data, pi_hat)
    weights = np.zeros(data.n)
    weights[data.respondents] = 1.0 / pi_hat[data.respondents]
    theta, _ = solve_weighted_ee(ef, _records(data, ef), weights)
    return theta


def aipw_estimate(data, ef, pi_hat, m_hat=None, start=None):
    """
    Raíz de Σ [δ U/π̂ − (δ − π̂)/π̂ · b(θ)] = 0 con b(θ) = U(θ; O, M̂).

    Args:
        data: Dataset
        ef: EstimatingFunction
        pi_hat: Probabilidades de respuesta
        m_hat: Predicciones de M para todas las unidades (None equivale a b ≡ 0)

    Returns:
        θ̂ (vector de largo q)
    """
    pi_hat = _check_pi(data, pi_hat)
    if m_hat is None:
        return ipw_estimate(data, ef, pi_hat)

    resp = data.respondents
    n = data.n
    Z_resp = _records(data, ef)[resp]
    Z_hat = ef.assemble(data.observed, m_hat)
    ipw_weights = 1.0 / pi_hat[resp]
    augmentation = (data.delta - pi_hat) / pi_hat

    def residual_at(theta):
        return (ipw_weights @ ef.u_at(theta, Z_resp) - augmentation @ ef.u_at(theta, Z_hat)) / n

    def jacobian_at(theta):
        return (
            np.tensordot(ipw_weights, ef.jac_at(theta, Z_resp), axes=1)
            - np.tensordot(augmentation, ef.jac_at(theta, Z_hat), axes=1)
        ) / n

    if start is None:
        start = np.zeros(ef.q)
    theta, _, norm = find_root(residual_at, jacobian_at, start)
    logger.debug(f"AIPW resuelto con ‖r‖∞={norm:.3g}")
    return theta


def baseline_estimate(kind, data, ef, pi_hat=None, m_hat=None, complete=None):
    """Despacha al estimador de referencia pedido."""
    kind = BaselineKind.from_token(kind)
    if kind is BaselineKind.FULL:
        if complete is None:
            raise ConfigError("El estimador Full necesita los datos completos (sólo en simulación)")
        return full_estimate(complete, ef)
    if kind is BaselineKind.CC:
        return cc_estimate(data, ef)
    if kind is BaselineKind.IPW:
        return ipw_estimate(data, ef, pi_hat)
    return aipw_estimate(data, ef, pi_hat, m_hat)
