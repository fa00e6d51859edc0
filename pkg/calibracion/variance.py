"""
Errores estándar del estimador GEC.

El sándwich usa los valores de influencia

    d_i = γ̂ s_i + δ_i ω̂_i (U_i − γ̂ s_i) + (1 − δ_i/π̂_i) κ̂ h_i

con Cov(θ̂) = τ̂⁻¹ V̂ τ̂⁻ᵀ / N. El bootstrap no paramétrico queda como
alternativa y reejecuta todo el pipeline por remuestra.
"""
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from config import constants
from core.exceptions import ConfigError, GecalError, SingularGram, SingularTau, TooManyFailures

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InfluenceParts:
    gamma_hat: np.ndarray
    kappa_hat: np.ndarray
    d: np.ndarray
    tau1_hat: np.ndarray
    kappa_singular: bool = False


def gamma_fit(U_resp, s_resp, lambda_hat, entropy):
    """
    Proyección de U sobre s con pesos f′(λ̂ᵀs):
    γ̂ = [Σ δ f′ U sᵀ][Σ δ f′ s sᵀ]⁻¹.

    Returns:
        Matriz q × dim(s)
    """
    U_resp = np.asarray(U_resp, dtype=float)
    if U_resp.ndim == 1:
        U_resp = U_resp.reshape(-1, 1)
    s_resp = np.asarray(s_resp, dtype=float)
    weights = entropy.f_prime(s_resp @ lambda_hat)
    gram = (s_resp * weights[:, None]).T @ s_resp
    cross = (U_resp * weights[:, None]).T @ s_resp
    if np.linalg.cond(gram) > constants.RANK_CONDITION_MAX:
        raise SingularGram("La matriz de Gram ponderada de las covariables de calibración es singular")
    return linalg.solve(gram, cross.T, assume_a="sym").T


def _debiased_covariates(problem, s, pi):
    s = s.copy()
    s[:, -1] = problem.debias_scale * problem.entropy.debias_covariate(pi)
    return s


def kappa_fit(gamma_hat, solution, problem, U, response_model):
    """
    κ̂ anula la derivada en φ de la media de los valores de influencia.

    A(φ) = media de γ̂ s_i(φ) + δ ω_i(λ̂, φ)(U_i − γ̂ s_i(φ)), donde sólo la
    columna de desesgo depende de φ, y B(φ) = media de (1 − δ/π(φ)) h(φ).
    Se resuelve κ̂ ∂B/∂φ = −∂A/∂φ por mínimos cuadrados.

    Returns:
        Tupla (κ̂ de q × r, bandera de sistema singular)
    """
    q = gamma_hat.shape[0]
    if response_model is None:
        return np.zeros((q, 0)), False

    phi = response_model.fit.phi
    r = phi.shape[0]
    delta = problem.delta
    resp = delta == 1
    U = np.where(resp[:, None], U, 0.0)
    lambda_ = solution.lambda_
    entropy = problem.entropy

    def bracket_a(phi_value):
        s_phi = _debiased_covariates(problem, solution.covariates, response_model.pi_at(phi_value))
        omega = np.zeros(problem.n)
        omega[resp] = entropy.g_inverse(s_phi[resp] @ lambda_)
        fitted = s_phi @ gamma_hat.T
        return np.mean(fitted + (delta * omega)[:, None] * (U - fitted), axis=0)

    def bracket_b(phi_value):
        pi = response_model.pi_at(phi_value)
        return np.mean((1.0 - delta / pi)[:, None] * response_model.h_at(phi_value), axis=0)

    dA = np.empty((q, r))
    dB = np.empty((r, r))
    for j in range(r):
        h = max(constants.KAPPA_FD_STEP, constants.KAPPA_FD_STEP * abs(phi[j]))
        step = np.zeros(r)
        step[j] = h
        dA[:, j] = (bracket_a(phi + step) - bracket_a(phi - step)) / (2.0 * h)
        dB[:, j] = (bracket_b(phi + step) - bracket_b(phi - step)) / (2.0 * h)

    if not np.all(np.isfinite(dB)) or np.linalg.cond(dB) > constants.RANK_CONDITION_MAX:
        logger.warning("Sistema de κ̂ singular; se usa κ̂ = 0")
        return np.zeros((q, r)), True
    kappa_t, *_ = linalg.lstsq(dB.T, -dA.T)
    return kappa_t.T, False


def influence_parts(result, ef, data, response_model=None):
    """Arma γ̂, κ̂, los valores d_i y τ̂₁ a partir de un GecResult."""
    problem = result.problem
    solution = result.weight_solution
    theta = result.theta_hat
    resp = problem.respondents
    s = solution.covariates
    Z = ef.assemble(data.observed, data.missing)

    U = np.zeros((problem.n, ef.q))
    U[resp] = ef.u_at(theta, Z[resp])
    try:
        gamma = gamma_fit(U[resp], s[resp], solution.lambda_, problem.entropy)
    except SingularGram:
        if not resp.all():
            raise
        # con todos respondiendo y ω ≡ 1, d = U para cualquier γ̂
        gamma = np.zeros((ef.q, s.shape[1]))
    kappa, singular = kappa_fit(gamma, solution, problem, U, response_model)

    omega = solution.weights
    fitted = s @ gamma.T
    d = fitted + (problem.delta * omega)[:, None] * (U - fitted)
    if kappa.shape[1]:
        pi = response_model.pi_hat
        d = d + ((1.0 - problem.delta / pi)[:, None] * response_model.h_at(response_model.fit.phi)) @ kappa.T

    tau = np.tensordot(omega[resp], ef.jac_at(theta, Z[resp]), axes=1) / problem.n
    if np.linalg.cond(tau) > constants.TAU_CONDITION_MAX:
        raise SingularTau(f"τ̂₁ singular (cond={np.linalg.cond(tau):.3g})")
    return InfluenceParts(gamma, kappa, d, tau, singular)


def influence_values(parts):
    """ψ_i = τ̂⁻¹(d_i − d̄): Cov(θ̂) = Σ ψψᵀ / N²."""
    centered = parts.d - parts.d.mean(axis=0)
    return linalg.solve(parts.tau1_hat, centered.T).T


def sandwich_se(data, result, parts):
    """
    Returns:
        Tupla (SE de largo q, matriz de covarianza q×q)
    """
    psi = influence_values(parts)
    n = psi.shape[0]
    cov = psi.T @ psi / n ** 2
    cov = (cov + cov.T) / 2.0
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)), cov


def _bootstrap_draw(data, estimator, seed_sequence):
    rng = np.random.default_rng(seed_sequence)
    indices = rng.integers(0, data.n, size=data.n)
    try:
        return np.atleast_1d(np.asarray(estimator(data.take(indices)), dtype=float))
    except GecalError as e:
        logger.info(f"Remuestra descartada: {e}")
        return None


def bootstrap_se(data, estimator, B=constants.DEFAULT_BOOTSTRAP_B, seed=constants.DEFAULT_SEED, n_jobs=1):
    """
    Bootstrap no paramétrico sobre unidades.

    Args:
        data: Dataset
        estimator: Función Dataset → θ̂ que reejecuta el pipeline completo
        B: Número de remuestras (≥ 50)
        seed: Semilla; cada remuestra recibe su propio flujo
        n_jobs: Procesos de joblib

    Returns:
        SE por coordenada (desvío de las remuestras exitosas)

    Raises:
        TooManyFailures: más del 20% de remuestras descartadas
    """
    if B < constants.MIN_BOOTSTRAP_B:
        raise ConfigError(f"El bootstrap necesita B ≥ {constants.MIN_BOOTSTRAP_B} (se pidió {B})")
    streams = np.random.SeedSequence(seed).spawn(B)
    draws = Parallel(n_jobs=n_jobs)(delayed(_bootstrap_draw)(data, estimator, stream) for stream in streams)
    successes = [draw for draw in draws if draw is not None]
    failures = B - len(successes)
    if failures > constants.MAX_FAILURE_RATIO * B:
        raise TooManyFailures(f"{failures} de {B} remuestras fallaron")
    if failures:
        logger.warning(f"Bootstrap: {failures} de {B} remuestras descartadas")
    return np.std(np.vstack(successes), axis=0, ddof=1)
