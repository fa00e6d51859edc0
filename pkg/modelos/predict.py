"""
Modelos de predicción de la parte faltante M y cross-fitting en K folds.

Los predictores son ajustes deterministas (lineal, logístico y splines
cúbicos naturales aditivos). Con un modelo de propensity score dudoso conviene
la familia spline: el debiasing no exige tasa de convergencia al predictor,
pero un predictor más flexible mejora el rendimiento en muestras finitas.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import patsy
from joblib import Parallel, delayed
from scipy import linalg, special

from config import constants
from core.exceptions import ConfigError, DimensionMismatch, EmptyTrainingFold
from modelos.psmodel import fit_logistic, with_intercept

logger = logging.getLogger(__name__)


@enum.unique
class PredictorFamily(enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    SPLINE_ADDITIVE = "spline"

    @classmethod
    def from_token(cls, token):
        if isinstance(token, cls):
            return token
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            valid = ", ".join(family.value for family in cls)
            raise ConfigError(f"Familia de predictor desconocida '{token}'. Opciones: {valid}")


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    K: int
    seed: int

    def members(self, k):
        return np.flatnonzero(self.fold_of == k)


@dataclass(frozen=True)
class Predictor:
    family: PredictorFamily
    coefficients: np.ndarray
    basis_spec: tuple = ()
    ridge: bool = False


def make_folds(N, K=constants.DEFAULT_FOLDS, seed=constants.DEFAULT_SEED):
    """
    Partición aleatoria de 1..N en K folds de tamaños que difieren a lo sumo en 1.
    Los folds se numeran 1..K.
    """
    if K < 2 or K > N:
        raise ConfigError(f"K={K} folds no es válido para N={N} (se requiere 2 ≤ K ≤ N)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(N)
    fold_of = np.empty(N, dtype=int)
    fold_of[order] = np.arange(N) % K + 1
    return FoldAssignment(fold_of, K, seed)


def spline_knots(column, n_knots=constants.DEFAULT_SPLINE_KNOTS):
    """Nudos: extremos del rango y cuantiles interiores {1/(k+1), …, k/(k+1)}."""
    column = np.asarray(column, dtype=float)
    probs = np.arange(1, n_knots + 1) / (n_knots + 1)
    interior = np.quantile(column, probs)
    knots = np.unique(np.concatenate([[column.min()], interior, [column.max()]]))
    return knots


def _cr(x, knots, constraints):
    return np.asarray(
        patsy.cr(x, knots=knots[1:-1], lower_bound=knots[0], upper_bound=knots[-1], constraints=constraints)
    )


def _cr_columns(x, knots, constraints=None):
    """patsy.cr dentro del rango de los nudos; fuera de él, extrapolación lineal."""
    x = np.asarray(x, dtype=float)
    low, high = knots[0], knots[-1]
    basis = _cr(np.clip(x, low, high), knots, constraints)
    below, above = np.minimum(x - low, 0.0), np.maximum(x - high, 0.0)
    if below.any() or above.any():
        h = constants.SPLINE_SLOPE_STEP * (high - low)
        ends = _cr(np.array([low, low + h, high - h, high]), knots, constraints)
        basis = basis + below[:, None] * (ends[1] - ends[0]) / h + above[:, None] * (ends[3] - ends[2]) / h
    return basis


@dataclass(frozen=True)
class SplineSpec:
    """Nudos de una covariable y la restricción de centrado fijada en entrenamiento."""

    knots: np.ndarray
    centering: Optional[np.ndarray] = None

    @classmethod
    def fit(cls, column, n_knots=constants.DEFAULT_SPLINE_KNOTS):
        knots = spline_knots(column, n_knots)
        if len(knots) < 3:
            return cls(knots)
        return cls(knots, _cr_columns(column, knots).mean(axis=0, keepdims=True))


def spline_basis(x, spec):
    """
    Base de spline cúbico natural (patsy.cr) centrada con las medias de
    entrenamiento: K − 1 columnas para K nudos, sin intercepto. Fuera del rango
    de entrenamiento la base sigue lineal, como todo spline natural. Con menos
    de 3 nudos distintos la base es la columna x.
    """
    x = np.asarray(x, dtype=float)
    if spec.centering is None:
        return x.reshape(-1, 1)
    return _cr_columns(x, spec.knots, constraints=spec.centering)


def _design(family, O, basis_spec):
    O = np.asarray(O, dtype=float)
    if O.ndim == 1:
        O = O.reshape(-1, 1)
    if family is PredictorFamily.SPLINE_ADDITIVE:
        blocks = [spline_basis(O[:, j], spec) for j, spec in enumerate(basis_spec)]
        return with_intercept(np.hstack(blocks)) if blocks else np.ones((O.shape[0], 1))
    return with_intercept(O)


def _least_squares(X, y):
    gram = X.T @ X
    p = gram.shape[0]
    ridge = np.linalg.matrix_rank(X) < p or np.linalg.cond(gram) > constants.RANK_CONDITION_MAX
    if ridge:
        shift = constants.RIDGE_SHIFT * np.trace(gram) / p
        logger.warning(f"Diseño con rango deficiente; se agrega ridge {shift:.3g}")
        gram = gram + shift * np.eye(p)
    return linalg.solve(gram, X.T @ y, assume_a="pos"), ridge


def fit_predictor(family, O_train, M_train, n_knots=constants.DEFAULT_SPLINE_KNOTS):
    """
    Ajusta el predictor de M a partir de O sobre los casos completos.

    Returns:
        Predictor (con ridge=True si hubo que regularizar)
    """
    family = PredictorFamily.from_token(family)
    O_train = np.asarray(O_train, dtype=float)
    if O_train.ndim == 1:
        O_train = O_train.reshape(-1, 1)
    M_train = np.asarray(M_train, dtype=float).ravel()
    if O_train.shape[0] != M_train.shape[0]:
        raise DimensionMismatch("O y M de entrenamiento tienen distinto número de filas")

    basis_spec = ()
    if family is PredictorFamily.SPLINE_ADDITIVE:
        basis_spec = tuple(SplineSpec.fit(O_train[:, j], n_knots) for j in range(O_train.shape[1]))
    X = _design(family, O_train, basis_spec)
    if X.shape[0] < X.shape[1]:
        raise DimensionMismatch(f"{X.shape[0]} filas no alcanzan para {X.shape[1]} coeficientes")

    if family is PredictorFamily.LOGISTIC:
        if not np.all(np.isin(M_train, (0.0, 1.0))):
            raise ConfigError("La familia logística requiere M binaria (0/1)")
        fit = fit_logistic(X, M_train)
        return Predictor(family, fit.phi, basis_spec, False)

    coefficients, ridge = _least_squares(X, M_train)
    return Predictor(family, coefficients, basis_spec, ridge)


def predict_with(predictor, O):
    """Predicción (media ajustada o probabilidad) para cada fila de O."""
    X = _design(predictor.family, O, predictor.basis_spec)
    if X.shape[1] != predictor.coefficients.shape[0]:
        raise DimensionMismatch("O no coincide con las columnas del predictor")
    linear = X @ predictor.coefficients
    if predictor.family is PredictorFamily.LOGISTIC:
        return special.expit(linear)
    return linear


def _fit_fold(k, data, family, folds, column, n_knots):
    in_fold = folds.fold_of == k
    train = ~in_fold & data.respondents
    if not train.any():
        raise EmptyTrainingFold(f"El complemento del fold {k} no tiene casos completos")
    predictor = fit_predictor(family, data.observed[train], data.missing[train, column], n_knots)
    return k, predict_with(predictor, data.observed[in_fold])


def cross_fit_predictions(data, family, folds, n_knots=constants.DEFAULT_SPLINE_KNOTS, n_jobs=1, column=0):
    """
    Predicciones fuera de fold M̂_i para todas las unidades.

    Para cada fold k se entrena con los casos completos fuera de k y se
    predice cada unidad de k, responda o no.
    """
    if folds.fold_of.shape[0] != data.n:
        raise DimensionMismatch("La asignación de folds no coincide con el número de unidades")
    results = Parallel(n_jobs=n_jobs)(
        delayed(_fit_fold)(k, data, family, folds, column, n_knots) for k in range(1, folds.K + 1)
    )
    m_hat = np.empty(data.n)
    for k, predictions in results:
        m_hat[folds.fold_of == k] = predictions
    return m_hat
