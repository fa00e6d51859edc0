"""
Generadores de datos para los tres diseños de simulación.

causal:  x ~ N(0, I₄), resultados potenciales lineales (OR1) o no lineales (OR2),
         T ~ Bernoulli(π(x)) con π logístico lineal (PS1) o no lineal (PS2).
ssl:     x ~ N(0, I₄), y lineal (OR1) o con términos x³ − x² + eˣ (OR2);
         etiqueta MAR logística (PS1) o MCAR con tasa n/(n+N) (PS2).
misscov: x₁ ~ N(0,1), x₂ ~ Bernoulli(0.5); x₂ falta según PS1 (MAR en x₁ e y)
         o PS2 (MCAR, logit −1).
"""
import functools
import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from scipy import linalg, special

from config import constants
from core.exceptions import ConfigError

logger = logging.getLogger(__name__)

SETTINGS = ("causal", "ssl", "misscov")

DEFAULT_SIZES = {
    "causal": constants.CAUSAL_SIZE,
    "ssl": constants.SSL_TOTAL_SIZE,
    "misscov": constants.MISSCOV_SIZE,
}


@dataclass(frozen=True)
class SimDesign:
    setting: str
    or_model: int = 1
    ps_model: int = 1
    N: int = 0
    n_labeled: int = constants.SSL_LABELED_SIZE
    M_reps: int = constants.DEFAULT_REPS
    seed: int = constants.DEFAULT_SEED

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"Diseño desconocido '{self.setting}'. Opciones: {', '.join(SETTINGS)}")
        if self.or_model not in (1, 2) or self.ps_model not in (1, 2):
            raise ConfigError("--or y --ps deben ser 1 o 2")
        if not self.N:
            object.__setattr__(self, "N", DEFAULT_SIZES[self.setting])
        if self.N < 50:
            raise ConfigError(f"N={self.N} es demasiado chico para simular (mínimo 50)")
        if self.setting == "ssl" and not 0 < self.n_labeled < self.N:
            raise ConfigError(f"n etiquetados ({self.n_labeled}) debe estar entre 1 y N−1 ({self.N - 1})")
        if self.M_reps < 2:
            raise ConfigError("Se necesitan al menos 2 réplicas")

    @property
    def label(self):
        return f"{self.setting} OR{self.or_model}PS{self.ps_model}"

    @property
    def mechanism(self):
        """Mecanismo de etiquetado del diseño ssl."""
        return "mar" if self.ps_model == 1 else "mcar"


@dataclass(frozen=True)
class CausalSample:
    X: np.ndarray
    T: np.ndarray
    Y: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    true_ate: float


@dataclass(frozen=True)
class SslSample:
    X: np.ndarray
    Y: np.ndarray
    delta: np.ndarray
    beta_true: np.ndarray


@dataclass(frozen=True)
class MisscovSample:
    X1: np.ndarray
    X2: np.ndarray
    X2_observed: np.ndarray
    delta: np.ndarray
    Y: np.ndarray
    beta_true: np.ndarray


# Causal

def _clip(x):
    return np.clip(x, -3.0, 3.0)


def _causal_h(x):
    return (x - 1.0) ** 3 - x ** 2 + x / (1.0 + np.exp(_clip(x))) + 10.0


def causal_propensity(X, ps_model):
    if ps_model == 1:
        eta = -0.25 + X[:, 0] + 0.5 * X[:, 1] - 0.5 * X[:, 2] - 0.1 * X[:, 3]
    else:
        eta = X[:, 0] - 0.5 * X[:, 0] * X[:, 1] - X[:, 2] ** 2 + 0.5 * X[:, 3] ** 3
    return special.expit(eta)


def gen_causal(design, rng):
    """
    Returns:
        CausalSample con resultados potenciales y ATE verdadero (1 u 10)
    """
    X = rng.standard_normal((design.N, 4))
    linear = X.sum(axis=1)
    if design.or_model == 1:
        m1, m0, true_ate = 1.0 + linear, linear, 1.0
    else:
        nonlinear = 0.5 * _causal_h(X).sum(axis=1)
        m1, m0, true_ate = 10.0 + linear + nonlinear, linear + nonlinear, 10.0
    y1 = m1 + rng.standard_normal(design.N)
    y0 = m0 + rng.standard_normal(design.N)
    T = (rng.random(design.N) < causal_propensity(X, design.ps_model)).astype(float)
    Y = T * y1 + (1.0 - T) * y0
    return CausalSample(X, T, Y, y1, y0, true_ate)


# Semi-supervisado

def _ssl_outcome(X, or_model, rng):
    y = 1.0 + X.sum(axis=1)
    if or_model == 2:
        y = y + (X ** 3 - X ** 2 + np.exp(X)).sum(axis=1)
    return y + rng.standard_normal(X.shape[0])


def gen_ssl(design, rng):
    X = rng.standard_normal((design.N, 4))
    Y = _ssl_outcome(X, design.or_model, rng)
    if design.ps_model == 1:
        p = special.expit(-1.0 - X[:, 0] - 0.5 * X[:, 1] + 0.5 * X[:, 2] + 0.1 * X[:, 3])
    else:
        p = np.full(design.N, design.n_labeled / design.N)
    delta = (rng.random(design.N) < p).astype(float)
    beta_true = np.ones(5) if design.or_model == 1 else reference_projection("ssl").beta
    return SslSample(X, Y, delta, beta_true)


# Covariable faltante

def _misscov_outcome(x1, x2, or_model, rng):
    if or_model == 1:
        return 1.0 + x1 + 2.0 * x2 + rng.standard_normal(x1.shape[0])
    signal = 0.5 + 2.0 * np.sin(np.pi * x1) - 1.5 * np.cos(2.0 * np.pi * x1) + 0.25 * x1 ** 3 + x2
    return signal + 2.0 * rng.standard_normal(x1.shape[0])


def gen_misscov(design, rng):
    x1 = rng.standard_normal(design.N)
    x2 = (rng.random(design.N) < 0.5).astype(float)
    y = _misscov_outcome(x1, x2, design.or_model, rng)
    eta = -1.0 + 0.5 * x1 + 0.5 * y if design.ps_model == 1 else np.full(design.N, -1.0)
    delta = (rng.random(design.N) < special.expit(eta)).astype(float)
    x2_observed = np.where(delta == 1, x2, np.nan)
    beta_true = np.array([1.0, 1.0, 2.0]) if design.or_model == 1 else reference_projection("misscov").beta
    return MisscovSample(x1.reshape(-1, 1), x2, x2_observed, delta, y, beta_true)


# Coeficientes verdaderos bajo OR2

@dataclass(frozen=True)
class ProjectionReference:
    beta: np.ndarray
    se: np.ndarray
    rows: int


def _reference_rows():
    return int(getattr(settings, "GECAL_REFERENCE_ROWS", constants.REFERENCE_ROWS))


def reference_projection(setting, rows=None, seed=constants.REFERENCE_SEED):
    """Proyección lineal β* = argmin E(y − xᵀβ)² bajo OR2, calculada una vez por proceso."""
    return _reference_projection(setting, rows or _reference_rows(), seed)


@functools.lru_cache(maxsize=None)
def _reference_projection(setting, rows, seed):
    rng = np.random.default_rng(seed)
    if setting == "ssl":
        X = rng.standard_normal((rows, 4))
        y = _ssl_outcome(X, 2, rng)
    elif setting == "misscov":
        x1 = rng.standard_normal(rows)
        x2 = (rng.random(rows) < 0.5).astype(float)
        y = _misscov_outcome(x1, x2, 2, rng)
        X = np.column_stack([x1, x2])
    else:
        raise ConfigError(f"No hay proyección de referencia para '{setting}'")

    design = np.hstack([np.ones((rows, 1)), X])
    beta, *_ = linalg.lstsq(design, y)
    residual = y - design @ beta
    bread = linalg.inv(design.T @ design)
    meat = (design * residual[:, None] ** 2).T @ design
    se = np.sqrt(np.diag(bread @ meat @ bread))
    logger.info(
        f"β verdadero ({setting}, OR2) con {rows} filas: {np.array2string(beta, precision=5)}; "
        f"SE Monte Carlo máx {se.max():.2g}"
    )
    return ProjectionReference(beta, se, rows)


GENERATORS = {
    "causal": gen_causal,
    "ssl": gen_ssl,
    "misscov": gen_misscov,
}
