"""
Tests de aceptación del laboratorio Monte Carlo a escala de escritorio.

Tardan minutos: sólo corren con GECAL_RUN_SLOW_TESTS=true en el entorno.
"""
import unittest
from dataclasses import replace

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from aplicaciones.services import EstimationOptions, EstimationService
from calibracion.estimand import mean_ef
from calibracion.solver import GecConfig, gec_profile
from calibracion.variance import influence_parts, sandwich_se
from core.dataset import Dataset
from modelos.psmodel import fit_logistic, predict_pi, with_intercept

from .generators import SimDesign, gen_misscov
from .services import SimulationService, replicate_seed

SEED = 20240901


def _run(setting, or_model, ps_model, methods, reps=200, **kwargs):
    design = SimDesign(setting, or_model=or_model, ps_model=ps_model, M_reps=reps, seed=SEED, **kwargs)
    return SimulationService.run_monte_carlo(design, methods, n_jobs=settings.GECAL_N_JOBS)


@unittest.skipUnless(getattr(settings, "GECAL_RUN_SLOW_TESTS", False), "GECAL_RUN_SLOW_TESTS no está activo")
class MisscovAcceptanceTest(SimpleTestCase):
    """Tests de aceptación del diseño con covariable faltante."""

    def test_or1_ps1(self):
        """Test de HD insesgado, su RMSE de β₀ y el sesgo de casos completos."""
        run = _run("misscov", 1, 1, ("CC", "HD"))
        for coef in run.coef_names:
            row = run.table.get("HD", coef)
            self.assertLessEqual(abs(row.bias), 3.0 * row.mc_se, msg=coef)
        rmse = 10.0 * run.table.get("HD", "beta0").rmse
        self.assertTrue(0.71 * 0.75 <= rmse <= 0.71 * 1.25, msg=f"RMSE×10={rmse:.3f}")
        self.assertGreaterEqual(10.0 * run.table.get("CC", "beta0").bias, 3.0)

    def test_or2_ps1_dominance(self):
        """Test de RMSE(HD) < RMSE(AIPW) con mejora de al menos 15% en dos coeficientes."""
        run = _run("misscov", 2, 1, ("AIPW", "HD"))
        reductions = []
        for coef in run.coef_names:
            hd = run.table.get("HD", coef).rmse
            aipw = run.table.get("AIPW", coef).rmse
            self.assertLess(hd, aipw, msg=coef)
            reductions.append(1.0 - hd / aipw)
        self.assertGreaterEqual(sum(r >= 0.15 for r in reductions), 2, msg=str(reductions))

    def test_response_model_without_y_biases_ipw(self):
        """Test de que quitar Y del propensity score al menos duplica el sesgo de IPW."""
        design = SimDesign("misscov", or_model=1, ps_model=1, M_reps=200, seed=SEED)
        options = EstimationOptions(compute_se=False)
        with_y, without_y = [], []
        for r in range(design.M_reps):
            sample = gen_misscov(design, np.random.default_rng(replicate_seed(SEED, r)))
            prepared = EstimationService.prepare_misscov(sample.X1, sample.X2_observed, sample.Y, options)
            with_y.append(EstimationService.point_estimate(prepared, "IPW", options)[0])
            design_x1 = with_intercept(sample.X1)
            reduced = replace(
                prepared,
                pi_hat=predict_pi(fit_logistic(design_x1, sample.delta), design_x1),
                response_model=None,
            )
            without_y.append(EstimationService.point_estimate(reduced, "IPW", options)[0])
        bias_with_y = np.abs(np.mean(with_y, axis=0) - sample.beta_true)
        bias_without_y = np.abs(np.mean(without_y, axis=0) - sample.beta_true)
        self.assertGreater(bias_without_y.max(), 2.0 * bias_with_y.max(), msg=f"{bias_without_y} vs {bias_with_y}")


@unittest.skipUnless(getattr(settings, "GECAL_RUN_SLOW_TESTS", False), "GECAL_RUN_SLOW_TESTS no está activo")
class CausalAcceptanceTest(SimpleTestCase):
    """Tests de aceptación del diseño causal."""

    def test_or1_ps1_unbiased(self):
        """Test de ATE insesgado para IPW, AIPW, ET y HD."""
        run = _run("causal", 1, 1, ("IPW", "AIPW", "ET", "HD"))
        for method in run.methods:
            row = run.table.get(method, "ate")
            self.assertLessEqual(abs(row.bias), 3.0 * row.mc_se, msg=method)

    def test_or1_ps2_et_beats_ipw(self):
        """Test de menor sesgo de ET que de IPW con el propensity score mal especificado."""
        run = _run("causal", 1, 2, ("IPW", "ET"))
        et = abs(run.table.get("ET", "ate").bias)
        self.assertLess(et, abs(run.table.get("IPW", "ate").bias))
        self.assertLessEqual(et, 0.1)


@unittest.skipUnless(getattr(settings, "GECAL_RUN_SLOW_TESTS", False), "GECAL_RUN_SLOW_TESTS no está activo")
class SslAcceptanceTest(SimpleTestCase):
    """Tests de aceptación del diseño semi-supervisado."""

    def test_or1_mcar_matches_ols(self):
        """Test de SE de ET a menos de 10% del de OLS supervisado con el modelo lineal correcto."""
        run = _run("ssl", 1, 2, ("CC", "ET"))
        for coef in run.coef_names:
            ratio = run.table.get("ET", coef).se / run.table.get("CC", coef).se
            self.assertLessEqual(abs(ratio - 1.0), 0.10, msg=f"{coef}: {ratio:.3f}")

    def test_or2_mcar_efficiency(self):
        """Test de varianza de ET no mayor que la de OLS supervisado en 4 de 5 coeficientes."""
        run = _run("ssl", 2, 2, ("CC", "ET"))
        wins = sum(run.table.get("ET", coef).se <= run.table.get("CC", coef).se for coef in run.coef_names)
        self.assertGreaterEqual(wins, 4)


@unittest.skipUnless(getattr(settings, "GECAL_RUN_SLOW_TESTS", False), "GECAL_RUN_SLOW_TESTS no está activo")
class SandwichAcceptanceTest(SimpleTestCase):
    """Tests de aceptación del error estándar sándwich."""

    def test_mcar_mean_coverage(self):
        """Test de la mediana del SE sándwich contra el desvío Monte Carlo."""
        n, reps = 5000, 500
        estimates, standard_errors = [], []
        for r in range(reps):
            rng = np.random.default_rng(replicate_seed(SEED, r))
            x = rng.standard_normal(n)
            y = 1.0 + 2.0 * x + rng.standard_normal(n)
            delta = (rng.random(n) < 0.6).astype(float)
            data = Dataset.from_arrays(x, y, delta=delta)
            pi_hat = np.full(n, delta.mean())
            result = gec_profile(data, mean_ef(), 1.0 + 2.0 * x, pi_hat, GecConfig())
            se, _ = sandwich_se(data, result, influence_parts(result, mean_ef(), data))
            estimates.append(result.theta_hat[0])
            standard_errors.append(se[0])
        mc_sd = np.std(estimates, ddof=1)
        self.assertLess(abs(np.median(standard_errors) / mc_sd - 1.0), 0.15)
