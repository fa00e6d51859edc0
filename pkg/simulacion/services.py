"""
Capa de servicios del laboratorio Monte Carlo.
Corre réplicas independientes de un diseño, estima con cada método y resume
sesgo, SE y RMSE (×10) por método y coeficiente.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from aplicaciones.services import EstimationOptions, EstimationService, normalize_method
from core.dataset import Dataset
from core.exceptions import AllReplicatesFailed, GecalError
from simulacion.generators import GENERATORS

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1

DEFAULT_METHODS = {
    "causal": ("IPW", "AIPW", "ET", "HD"),
    "ssl": ("CC", "IPW", "AIPW", "ET", "HD"),
    "misscov": ("FULL", "CC", "IPW", "AIPW", "HD"),
}

METRIC_COLUMNS = ["method", "coef", "bias_x10", "se_x10", "rmse_x10", "mc_se_x10", "failures"]
REPLICATE_COLUMNS = ["replicate", "method", "coef", "estimate"]


def splitmix64(value):
    """Mezcla splitmix64 de un entero de 64 bits."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replicate_seed(seed, replicate):
    return (int(seed) ^ splitmix64(int(replicate))) & MASK64


@dataclass(frozen=True)
class MetricRow:
    method: str
    coef: str
    bias: float
    se: float
    rmse: float
    mc_se: float
    failures: int

    def as_record(self):
        return {
            "method": self.method,
            "coef": self.coef,
            "bias_x10": 10.0 * self.bias,
            "se_x10": 10.0 * self.se,
            "rmse_x10": 10.0 * self.rmse,
            "mc_se_x10": 10.0 * self.mc_se,
            "failures": self.failures,
        }


@dataclass(frozen=True)
class MetricTable:
    rows: tuple

    def get(self, method, coef):
        for row in self.rows:
            if row.method == method and row.coef == coef:
                return row
        raise KeyError(f"{method}/{coef}")

    def to_frame(self):
        return pd.DataFrame([row.as_record() for row in self.rows], columns=METRIC_COLUMNS)


@dataclass(frozen=True)
class MonteCarloRun:
    design: object
    methods: tuple
    coef_names: tuple
    truth: np.ndarray
    estimates: dict
    table: MetricTable


def _estimate_causal(sample, methods, options):
    treated, control = EstimationService.prepare_arms(sample.X, sample.T, sample.Y, options)
    treated = replace(treated, complete=Dataset.from_arrays(sample.X, sample.y1))
    control = replace(control, complete=Dataset.from_arrays(sample.X, sample.y0))
    out = {}
    for method in methods:
        try:
            theta1, _ = EstimationService.point_estimate(treated, method, options)
            theta0, _ = EstimationService.point_estimate(control, method, options)
            out[method] = np.array([theta1[0] - theta0[0]])
        except GecalError as e:
            logger.info(f"{method} falló: {e}")
            out[method] = None
    return out


def _estimate_prepared(prepared, methods, options):
    out = {}
    for method in methods:
        try:
            theta, _ = EstimationService.point_estimate(prepared, method, options)
            out[method] = np.asarray(theta, dtype=float)
        except GecalError as e:
            logger.info(f"{method} falló: {e}")
            out[method] = None
    return out


def _prepare(design, sample, options):
    if design.setting == "ssl":
        labeled = sample.delta == 1
        complete_y = np.concatenate([sample.Y[labeled], sample.Y[~labeled]])
        return EstimationService.prepare_ssl(
            sample.X[labeled], sample.Y[labeled], sample.X[~labeled], design.mechanism, options, complete_y=complete_y
        )
    return EstimationService.prepare_misscov(
        sample.X1, sample.X2_observed, sample.Y, options, complete_x2=sample.X2
    )


def run_replicate(design, methods, replicate, options):
    """
    Una réplica: genera los datos con su propio flujo y estima con cada método.

    Returns:
        Tupla (replicate, {método: θ̂ o None}, valor verdadero)
    """
    seed = replicate_seed(design.seed, replicate)
    rng = np.random.default_rng(seed)
    sample = GENERATORS[design.setting](design, rng)
    options = replace(options, seed=seed % (1 << 32), compute_se=False, n_jobs=1)

    if design.setting == "causal":
        truth = np.array([sample.true_ate])
        try:
            return replicate, _estimate_causal(sample, methods, options), truth
        except GecalError as e:
            logger.info(f"Réplica {replicate}: falló el ajuste de nuisance ({e})")
            return replicate, {method: None for method in methods}, truth

    truth = np.asarray(sample.beta_true, dtype=float)
    try:
        prepared = _prepare(design, sample, options)
    except GecalError as e:
        logger.info(f"Réplica {replicate}: falló el ajuste de nuisance ({e})")
        return replicate, {method: None for method in methods}, truth
    return replicate, _estimate_prepared(prepared, methods, options), truth


def _coef_names(design):
    if design.setting == "causal":
        return ("ate",)
    if design.setting == "ssl":
        return tuple(f"beta{j}" for j in range(5))
    return ("beta0", "beta1", "beta2")


def summarize(estimates, truth, coef_names, methods, M):
    """
    Sesgo, SE (desvío con ddof=1), RMSE = √(sesgo² + SE²) y SE Monte Carlo SE/√M.

    Raises:
        AllReplicatesFailed: algún método sin réplicas exitosas
    """
    rows = []
    for method in methods:
        successes = [theta for theta in estimates[method] if theta is not None]
        failures = M - len(successes)
        if not successes:
            raise AllReplicatesFailed(f"Todas las réplicas fallaron para {method}")
        stacked = np.vstack(successes)
        bias = stacked.mean(axis=0) - truth
        se = stacked.std(axis=0, ddof=1) if len(successes) > 1 else np.zeros(stacked.shape[1])
        rmse = np.sqrt(bias ** 2 + se ** 2)
        mc_se = se / np.sqrt(len(successes))
        if failures:
            logger.warning(f"{method}: {failures} de {M} réplicas fallaron")
        for j, coef in enumerate(coef_names):
            rows.append(MetricRow(method, coef, float(bias[j]), float(se[j]), float(rmse[j]), float(mc_se[j]), failures))
    return MetricTable(tuple(rows))


class SimulationService:
    """Servicio para estudios Monte Carlo."""

    @staticmethod
    def run_monte_carlo(design, methods=None, options=None, n_jobs=1):
        """
        Corre design.M_reps réplicas (en paralelo con joblib).

        Args:
            design: SimDesign
            methods: Métodos a comparar (por defecto los del diseño)
            options: EstimationOptions base
            n_jobs: Procesos de joblib

        Returns:
            MonteCarloRun
        """
        options = options or EstimationOptions()
        methods = tuple(normalize_method(m) for m in (methods or DEFAULT_METHODS[design.setting]))
        logger.info(f"Simulación {design.label}: N={design.N}, M={design.M_reps}, métodos {', '.join(methods)}")

        outputs = Parallel(n_jobs=n_jobs)(
            delayed(run_replicate)(design, methods, r, options) for r in range(design.M_reps)
        )
        outputs = sorted(outputs, key=lambda item: item[0])
        truth = outputs[0][2]
        estimates = {method: [out[method] for _, out, _ in outputs] for method in methods}
        coef_names = _coef_names(design)
        table = summarize(estimates, truth, coef_names, methods, design.M_reps)
        return MonteCarloRun(design, methods, coef_names, truth, estimates, table)

    @staticmethod
    def emit_replicates(run):
        """Un registro por (réplica, método, coeficiente) con la estimación."""
        records = []
        for r in range(run.design.M_reps):
            for method in run.methods:
                theta = run.estimates[method][r]
                if theta is None:
                    continue
                for j, coef in enumerate(run.coef_names):
                    records.append({"replicate": r, "method": method, "coef": coef, "estimate": float(theta[j])})
        return pd.DataFrame(records, columns=REPLICATE_COLUMNS)
