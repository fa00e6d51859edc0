"""
Capa de servicios para las aplicaciones del estimador.
Arma el pipeline completo (propensity score, cross-fitting, calibración y
varianza) para efecto causal promedio, regresión semi-supervisada y
regresión con covariables faltantes.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from calibracion.baselines import BaselineKind, baseline_estimate
from calibracion.estimand import mean_ef, misscov_ef, ols_ef
from calibracion.solver import GecConfig, gec_profile
from calibracion.variance import bootstrap_se, influence_parts, influence_values, sandwich_se
from config import constants
from core.dataset import Dataset
from core.entropy import EntropyKind
from core.exceptions import ConfigError, DimensionMismatch, OneArmEmpty
from modelos.predict import PredictorFamily, cross_fit_predictions, make_folds
from modelos.psmodel import ResponseModel, fit_logistic, with_intercept

logger = logging.getLogger(__name__)

GEC_METHODS = tuple(kind.name for kind in EntropyKind)
BASELINE_METHODS = tuple(kind.name for kind in BaselineKind)


def normalize_method(token):
    """'et', 'HD', 'ht', 'aipw'… → nombre canónico en mayúsculas."""
    name = str(token).strip().upper()
    if name == "HT":
        name = "IPW"
    if name not in GEC_METHODS + BASELINE_METHODS:
        valid = ", ".join(BASELINE_METHODS + GEC_METHODS)
        raise ConfigError(f"Método desconocido '{token}'. Opciones: {valid}")
    return name


def ci_multiplier(level):
    if abs(level - constants.DEFAULT_CI_LEVEL) < 1e-12:
        return constants.CI_MULTIPLIER_95
    if not 0 < level < 1:
        raise ConfigError(f"Nivel de confianza inválido: {level}")
    return float(stats.norm.ppf(0.5 + level / 2.0))


@dataclass(frozen=True)
class EstimationOptions:
    entropy: str = constants.DEFAULT_ENTROPY
    folds: int = constants.DEFAULT_FOLDS
    seed: int = constants.DEFAULT_SEED
    family: str = constants.DEFAULT_FAMILY
    n_knots: int = constants.DEFAULT_SPLINE_KNOTS
    ps_truncation: float = 0.0
    se_method: str = constants.DEFAULT_SE_METHOD
    bootstrap_b: int = constants.DEFAULT_BOOTSTRAP_B
    normalization: Optional[bool] = None
    n_jobs: int = 1
    theta_tol: float = constants.THETA_TOL
    lambda_tol: float = constants.DUAL_GRAD_TOL
    max_outer: int = constants.DEFAULT_MAX_OUTER
    compute_se: bool = True

    def __post_init__(self):
        if self.se_method not in ("sandwich", "bootstrap"):
            raise ConfigError(f"Método de SE desconocido '{self.se_method}' (sandwich o bootstrap)")
        if not 0.0 <= self.ps_truncation < 0.5:
            raise ConfigError("El recorte del propensity score debe estar en [0, 0.5)")

    def gec_config(self, default_normalization, entropy=None):
        normalization = default_normalization if self.normalization is None else self.normalization
        return GecConfig(
            entropy=entropy or self.entropy,
            theta_tol=self.theta_tol,
            lambda_tol=self.lambda_tol,
            max_outer=self.max_outer,
            normalization=normalization,
        )


@dataclass(frozen=True)
class PreparedProblem:
    """Un problema con sus nuisance ya ajustados, compartido entre métodos."""

    target: str
    data: Dataset
    ef: object
    pi_hat: np.ndarray
    response_model: Optional[ResponseModel]
    m_hat: Optional[np.ndarray]
    default_normalization: bool = False
    complete: Optional[Dataset] = None


@dataclass(frozen=True)
class EstimateResult:
    target: str
    method: str
    theta_hat: np.ndarray
    se: np.ndarray
    cov: Optional[np.ndarray]
    coef_names: tuple
    n: int
    n_respondents: int
    gec: Optional[object] = None
    influence: Optional[np.ndarray] = field(default=None, repr=False)

    def confidence_intervals(self, level=constants.DEFAULT_CI_LEVEL):
        z = ci_multiplier(level)
        return self.theta_hat - z * self.se, self.theta_hat + z * self.se

    def rows(self, level=constants.DEFAULT_CI_LEVEL):
        low, high = self.confidence_intervals(level)
        for j, name in enumerate(self.coef_names):
            yield {
                "target": self.target,
                "coef": name,
                "estimate": self.theta_hat[j],
                "se": self.se[j],
                "ci_low": low[j],
                "ci_high": high[j],
                "entropy": self.method.lower(),
                "n": self.n,
                "n_respondents": self.n_respondents,
            }


@dataclass(frozen=True)
class AteResult:
    theta1: float
    theta0: float
    ate: float
    se_ate: float
    per_arm: tuple
    se_theta1: float = float("nan")
    se_theta0: float = float("nan")
    method: str = "ET"

    def as_estimate(self):
        """Vista en formato de EstimateResult: θ₁, θ₀ y el ATE."""
        arm = self.per_arm[0]
        return EstimateResult(
            target="ate",
            method=self.method,
            theta_hat=np.array([self.theta1, self.theta0, self.ate]),
            se=np.array([self.se_theta1, self.se_theta0, self.se_ate]),
            cov=None,
            coef_names=("theta1", "theta0", "ate"),
            n=arm.n,
            n_respondents=arm.n,
        )


def _as_matrix(values):
    arr = np.asarray(values, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def _cross_fit(data, options, family=None):
    folds = make_folds(data.n, options.folds, options.seed)
    return cross_fit_predictions(
        data, family or options.family, folds, n_knots=options.n_knots, n_jobs=options.n_jobs
    )


class EstimationService:
    """Servicio para las tres aplicaciones del estimador de calibración."""

    # Preparación de nuisance

    @staticmethod
    def prepare_arms(X, T, Y, options):
        """
        Ajusta un único propensity score P(T=1|X) y predicciones por brazo.

        Returns:
            Tupla (PreparedProblem del brazo tratado, PreparedProblem del control)
        """
        X = _as_matrix(X)
        T = np.asarray(T, dtype=float).ravel()
        Y = np.asarray(Y, dtype=float).ravel()
        if X.shape[0] != T.shape[0] or T.shape[0] != Y.shape[0]:
            raise DimensionMismatch("X, T e Y deben tener la misma cantidad de filas")
        if not np.all(np.isin(T, (0.0, 1.0))):
            raise DimensionMismatch("El tratamiento debe ser 0/1")
        if T.sum() == 0 or T.sum() == T.shape[0]:
            raise OneArmEmpty("Uno de los brazos de tratamiento está vacío")

        design = with_intercept(X)
        fit = fit_logistic(design, T, truncation=options.ps_truncation)
        prepared = []
        for arm in (1, 0):
            indicator = (T == arm).astype(float)
            model = ResponseModel(fit, design, complement=(arm == 0))
            data = Dataset.from_arrays(X, Y.copy(), delta=indicator)
            m_hat = _cross_fit(data, options)
            prepared.append(
                PreparedProblem(f"arm{arm}", data, mean_ef(), model.pi_hat, model, m_hat, default_normalization=True)
            )
        return tuple(prepared)

    @staticmethod
    def prepare_ssl(X_labeled, Y_labeled, X_unlabeled, mechanism="mar", options=None, complete_y=None):
        """
        Apila etiquetados y no etiquetados; δ indica la etiqueta.

        Sin no etiquetados se usa π ≡ 1, que reduce el estimador a OLS.
        """
        options = options or EstimationOptions()
        X_labeled = _as_matrix(X_labeled)
        X_unlabeled = _as_matrix(X_unlabeled) if X_unlabeled is not None else np.empty((0, X_labeled.shape[1]))
        Y_labeled = np.asarray(Y_labeled, dtype=float).ravel()
        n, p = X_labeled.shape
        if n < p + 1:
            raise DimensionMismatch(f"{n} etiquetados no alcanzan para {p + 1} coeficientes")
        X = np.vstack([X_labeled, X_unlabeled])
        Y = np.concatenate([Y_labeled, np.full(X_unlabeled.shape[0], np.nan)])
        delta = np.concatenate([np.ones(n), np.zeros(X_unlabeled.shape[0])])
        data = Dataset.from_arrays(X, Y, delta=delta)
        ef = ols_ef(p)
        complete = Dataset.from_arrays(X, complete_y) if complete_y is not None else None

        if X_unlabeled.shape[0] == 0:
            logger.info("Sin datos no etiquetados: el estimador se reduce a OLS")
            return PreparedProblem("ssl", data, ef, np.ones(n), None, Y_labeled.copy(), complete=complete)

        mechanism = str(mechanism).lower()
        if mechanism == "mcar":
            pi_hat = np.full(data.n, n / data.n)
            model = None
        elif mechanism == "mar":
            design = with_intercept(X)
            fit = fit_logistic(design, delta, truncation=options.ps_truncation)
            model = ResponseModel(fit, design)
            pi_hat = model.pi_hat
        else:
            raise ConfigError(f"Mecanismo desconocido '{mechanism}' (mar o mcar)")
        m_hat = _cross_fit(data, options)
        return PreparedProblem("ssl", data, ef, pi_hat, model, m_hat, complete=complete)

    @staticmethod
    def prepare_misscov(X1, X2, Y, options=None, complete_x2=None):
        """
        Propensity score en (1, X1, Y) y X̂₂ por cross-fitting sobre (X1, Y).
        Si X₂ es binaria la familia lineal se reemplaza por la logística.
        """
        options = options or EstimationOptions()
        X1 = _as_matrix(X1)
        X2 = _as_matrix(X2)
        if X2.shape[1] != 1:
            raise DimensionMismatch("Se admite una única covariable faltante X2")
        Y = np.asarray(Y, dtype=float).ravel()
        observed = np.hstack([X1, Y.reshape(-1, 1)])
        data = Dataset.from_arrays(observed, X2)
        ef = misscov_ef(X1.shape[1], X2.shape[1])
        complete = Dataset.from_arrays(observed, complete_x2) if complete_x2 is not None else None
        if data.n_respondents < ef.q:
            raise DimensionMismatch(f"{data.n_respondents} respondentes no alcanzan para {ef.q} parámetros")

        if data.n_respondents == data.n:
            logger.info("Sin faltantes en X2: el estimador se reduce a OLS completo")
            return PreparedProblem("misscov", data, ef, np.ones(data.n), None, X2.copy(), complete=complete)

        design = with_intercept(observed)
        fit = fit_logistic(design, data.delta, truncation=options.ps_truncation)
        model = ResponseModel(fit, design)

        family = PredictorFamily.from_token(options.family)
        observed_x2 = X2[data.respondents]
        if family is PredictorFamily.LINEAR and np.all(np.isin(observed_x2, (0.0, 1.0))):
            family = PredictorFamily.LOGISTIC
        m_hat = _cross_fit(data, options, family)
        return PreparedProblem("misscov", data, ef, model.pi_hat, model, m_hat, complete=complete)

    # Estimación

    @staticmethod
    def point_estimate(prepared, method, options):
        """
        θ̂ del método pedido sobre un problema preparado.

        Returns:
            Tupla (θ̂, GecResult o None)
        """
        method = normalize_method(method)
        if method in GEC_METHODS:
            config = options.gec_config(prepared.default_normalization, entropy=method)
            result = gec_profile(prepared.data, prepared.ef, prepared.m_hat, prepared.pi_hat, config)
            return result.theta_hat, result
        theta = baseline_estimate(
            method, prepared.data, prepared.ef, prepared.pi_hat, prepared.m_hat, complete=prepared.complete
        )
        return theta, None

    @staticmethod
    def estimate_prepared(prepared, method, options, with_se=True):
        """θ̂ con errores estándar sándwich (sólo métodos GEC) sobre un problema preparado."""
        theta, gec = EstimationService.point_estimate(prepared, method, options)
        q = prepared.ef.q
        se = np.full(q, np.nan)
        cov = None
        psi = None
        if with_se and gec is not None:
            parts = influence_parts(gec, prepared.ef, prepared.data, prepared.response_model)
            se, cov = sandwich_se(prepared.data, gec, parts)
            psi = influence_values(parts)
        return EstimateResult(
            target=prepared.target,
            method=normalize_method(method),
            theta_hat=np.asarray(theta, dtype=float),
            se=se,
            cov=cov,
            coef_names=prepared.ef.coef_names,
            n=prepared.data.n,
            n_respondents=prepared.data.n_respondents,
            gec=gec,
            influence=psi,
        )

    @staticmethod
    def _bootstrap(data, closure, options):
        return bootstrap_se(data, closure, B=options.bootstrap_b, seed=options.seed, n_jobs=options.n_jobs)

    @staticmethod
    def ate_estimate(X, T, Y, options=None, method=None):
        """
        Efecto causal promedio θ₁ − θ₀ con un problema de calibración por brazo.

        Args:
            X: Covariables (N × p)
            T: Tratamiento 0/1
            Y: Resultado observado
            options: EstimationOptions
            method: Método (por defecto la entropía de options)

        Returns:
            AteResult

        Raises:
            OneArmEmpty: algún brazo sin unidades
        """
        options = options or EstimationOptions()
        method = normalize_method(method or options.entropy)
        arms = EstimationService.prepare_arms(X, T, Y, options)
        with_se = options.compute_se and options.se_method == "sandwich"
        treated, control = Parallel(n_jobs=min(options.n_jobs, 2))(
            delayed(EstimationService.estimate_prepared)(arm, method, options, with_se) for arm in arms
        )
        theta1 = float(treated.theta_hat[0])
        theta0 = float(control.theta_hat[0])
        se1, se0, se_ate = float("nan"), float("nan"), float("nan")

        if with_se and treated.influence is not None:
            n = treated.n
            psi1 = treated.influence[:, 0]
            psi0 = control.influence[:, 0]
            se1 = float(np.sqrt(np.sum(psi1 ** 2)) / n)
            se0 = float(np.sqrt(np.sum(psi0 ** 2)) / n)
            se_ate = float(np.sqrt(np.sum((psi1 - psi0) ** 2)) / n)
        elif options.compute_se and options.se_method == "bootstrap":
            data = Dataset.from_arrays(_as_matrix(X), np.asarray(Y, dtype=float), delta=np.ones(len(T)), treatment=T)
            quiet = replace(options, compute_se=False, n_jobs=1)

            def closure(sample):
                result = EstimationService.ate_estimate(
                    sample.observed, sample.treatment, sample.missing[:, 0], quiet, method
                )
                return [result.theta1, result.theta0, result.ate]

            se1, se0, se_ate = EstimationService._bootstrap(data, closure, options)

        logger.info(f"ATE {method}: {theta1 - theta0:.6g} (θ₁={theta1:.6g}, θ₀={theta0:.6g})")
        return AteResult(
            theta1=theta1,
            theta0=theta0,
            ate=theta1 - theta0,
            se_ate=float(se_ate),
            per_arm=(treated, control),
            se_theta1=float(se1),
            se_theta0=float(se0),
            method=method,
        )

    @staticmethod
    def ssl_estimate(X_labeled, Y_labeled, X_unlabeled, mechanism="mar", options=None, method=None):
        """
        Regresión lineal semi-supervisada calibrada.

        Returns:
            EstimateResult con los coeficientes (intercepto primero)
        """
        options = options or EstimationOptions()
        method = normalize_method(method or options.entropy)
        prepared = EstimationService.prepare_ssl(X_labeled, Y_labeled, X_unlabeled, mechanism, options)
        result = EstimationService.estimate_prepared(
            prepared, method, options, with_se=options.compute_se and options.se_method == "sandwich"
        )
        if options.compute_se and options.se_method == "bootstrap":
            quiet = replace(options, compute_se=False, n_jobs=1)

            def closure(sample):
                labeled = sample.respondents
                return EstimationService.ssl_estimate(
                    sample.observed[labeled], sample.missing[labeled, 0], sample.observed[~labeled],
                    mechanism, quiet, method,
                ).theta_hat

            result = replace(result, se=EstimationService._bootstrap(prepared.data, closure, options))
        return result

    @staticmethod
    def misscov_estimate(X1, X2, Y, options=None, method=None):
        """
        Regresión lineal con la covariable X₂ parcialmente faltante.

        Returns:
            EstimateResult con (β₀, β₁, β₂)
        """
        options = options or EstimationOptions()
        method = normalize_method(method or options.entropy)
        prepared = EstimationService.prepare_misscov(X1, X2, Y, options)
        result = EstimationService.estimate_prepared(
            prepared, method, options, with_se=options.compute_se and options.se_method == "sandwich"
        )
        if options.compute_se and options.se_method == "bootstrap":
            quiet = replace(options, compute_se=False, n_jobs=1)
            p1 = _as_matrix(X1).shape[1]

            def closure(sample):
                return EstimationService.misscov_estimate(
                    sample.observed[:, :p1], sample.missing, sample.observed[:, p1], quiet, method
                ).theta_hat

            result = replace(result, se=EstimationService._bootstrap(prepared.data, closure, options))
        return result
