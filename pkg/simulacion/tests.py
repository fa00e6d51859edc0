"""
Tests para los generadores de datos y el laboratorio Monte Carlo.
"""
import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from core.exceptions import AllReplicatesFailed, ConfigError

from .generators import SimDesign, gen_causal, gen_misscov, gen_ssl, reference_projection
from .services import (
    METRIC_COLUMNS,
    REPLICATE_COLUMNS,
    SimulationService,
    replicate_seed,
    splitmix64,
    summarize,
)


class SeedTest(SimpleTestCase):
    """Tests para splitmix64 y replicate_seed."""

    def test_splitmix64_reference_value(self):
        """Test del primer valor de splitmix64 con estado 0."""
        self.assertEqual(splitmix64(0), 0xE220A8397B1DCDAF)

    def test_replicate_seeds(self):
        """Test de semillas por réplica distintas y reproducibles."""
        seeds = [replicate_seed(20240901, r) for r in range(100)]
        self.assertEqual(len(set(seeds)), 100)
        self.assertEqual(seeds[0], 20240901 ^ 0xE220A8397B1DCDAF)
        self.assertEqual(seeds, [replicate_seed(20240901, r) for r in range(100)])
        self.assertTrue(all(0 <= seed < 2 ** 64 for seed in seeds))


class GeneratorTest(SimpleTestCase):
    """Tests para los generadores de los tres diseños."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.rng = np.random.default_rng(80)

    def test_causal_true_effect(self):
        """Test del ATE verdadero y de Y = T·y1 + (1 − T)·y0."""
        for or_model, effect in ((1, 1.0), (2, 10.0)):
            sample = gen_causal(SimDesign("causal", or_model=or_model, N=5000, M_reps=2), self.rng)
            self.assertEqual(sample.true_ate, effect)
            np.testing.assert_array_equal(sample.Y, np.where(sample.T == 1, sample.y1, sample.y0))
            self.assertLess(abs(np.mean(sample.y1 - sample.y0) - effect), 0.1)
            self.assertTrue(0.2 < sample.T.mean() < 0.8)

    def test_ssl_mcar_rate(self):
        """Test de la tasa de etiquetado MCAR n/N."""
        design = SimDesign("ssl", ps_model=2, N=2000, n_labeled=500, M_reps=2)
        sample = gen_ssl(design, self.rng)
        self.assertEqual(design.mechanism, "mcar")
        self.assertLess(abs(sample.delta.mean() - 0.25), 0.03)
        np.testing.assert_array_equal(sample.beta_true, np.ones(5))

    def test_misscov_sample(self):
        """Test de X₂ binaria, faltantes marcados y β verdadero bajo OR1."""
        sample = gen_misscov(SimDesign("misscov", N=2000, M_reps=2), self.rng)
        self.assertTrue(np.all(np.isin(sample.X2, (0.0, 1.0))))
        np.testing.assert_array_equal(np.isnan(sample.X2_observed), sample.delta == 0)
        np.testing.assert_array_equal(sample.beta_true, [1.0, 1.0, 2.0])
        self.assertTrue(0.2 < sample.delta.mean() < 0.9)

    def test_misscov_mcar_rate(self):
        """Test de la tasa MCAR expit(−1) bajo PS2."""
        sample = gen_misscov(SimDesign("misscov", ps_model=2, N=5000, M_reps=2), self.rng)
        self.assertLess(abs(sample.delta.mean() - 1.0 / (1.0 + np.e)), 0.03)

    def test_reference_projection_ssl(self):
        """Test de β* bajo OR2 en ssl contra la proyección analítica."""
        reference = reference_projection("ssl", rows=200000)
        expected = np.array([1.0 + 4.0 * (np.exp(0.5) - 1.0)] + [4.0 + np.exp(0.5)] * 4)
        self.assertTrue(np.all(np.abs(reference.beta - expected) <= 4.0 * reference.se), msg=str(reference.beta))

    def test_reference_projection_misscov(self):
        """Test de β* bajo OR2 en misscov contra la proyección analítica."""
        reference = reference_projection("misscov", rows=200000)
        expected = np.array([
            0.5 - 1.5 * np.exp(-2.0 * np.pi ** 2),
            2.0 * np.pi * np.exp(-np.pi ** 2 / 2.0) + 0.75,
            1.0,
        ])
        self.assertTrue(np.all(np.abs(reference.beta - expected) <= 4.0 * reference.se), msg=str(reference.beta))
        self.assertIs(reference, reference_projection("misscov", rows=200000))

    def test_invalid_designs(self):
        """Test de diseños inválidos."""
        with self.assertRaises(ConfigError):
            SimDesign("survey")
        with self.assertRaises(ConfigError):
            SimDesign("ssl", or_model=3)
        with self.assertRaises(ConfigError):
            SimDesign("misscov", N=10)
        with self.assertRaises(ConfigError):
            SimDesign("ssl", N=500, n_labeled=500)
        with self.assertRaises(ConfigError):
            SimDesign("causal", M_reps=1)
        with self.assertRaises(ConfigError):
            reference_projection("causal", rows=1000)

    def test_default_sizes(self):
        """Test de los tamaños por defecto de cada diseño."""
        self.assertEqual(SimDesign("causal").N, 1000)
        self.assertEqual(SimDesign("ssl").N, 2000)
        self.assertEqual(SimDesign("misscov").N, 500)
        self.assertEqual(SimDesign("misscov", or_model=2, ps_model=1).label, "misscov OR2PS1")


class SummarizeTest(SimpleTestCase):
    """Tests para summarize y la tabla de métricas."""

    def test_metrics(self):
        """Test de sesgo, SE, RMSE = √(sesgo² + SE²) y fallas."""
        estimates = {"CC": [np.array([1.0]), np.array([3.0]), None]}
        table = summarize(estimates, np.array([1.5]), ("mean",), ("CC",), 3)
        row = table.get("CC", "mean")
        self.assertAlmostEqual(row.bias, 0.5)
        self.assertAlmostEqual(row.se, np.sqrt(2.0))
        self.assertAlmostEqual(row.rmse, 1.5)
        self.assertAlmostEqual(row.mc_se, 1.0)
        self.assertEqual(row.failures, 1)
        frame = table.to_frame()
        self.assertEqual(list(frame.columns), METRIC_COLUMNS)
        self.assertAlmostEqual(frame.loc[0, "rmse_x10"], 15.0)

    def test_all_failed(self):
        """Test de un método sin réplicas exitosas."""
        with self.assertRaises(AllReplicatesFailed):
            summarize({"ET": [None, None]}, np.array([0.0]), ("mean",), ("ET",), 2)

    def test_missing_row(self):
        """Test de búsqueda de una fila inexistente."""
        table = summarize({"CC": [np.array([1.0]), np.array([2.0])]}, np.array([0.0]), ("mean",), ("CC",), 2)
        with self.assertRaises(KeyError):
            table.get("ET", "mean")


class MonteCarloTest(SimpleTestCase):
    """Tests para SimulationService."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.design = SimDesign("misscov", N=200, M_reps=4, seed=11)
        self.methods = ("CC", "IPW", "HD")

    def test_deterministic_across_workers(self):
        """Test de resultados idénticos con la misma semilla, en serie y con dos procesos."""
        serial = SimulationService.run_monte_carlo(self.design, self.methods)
        parallel = SimulationService.run_monte_carlo(self.design, self.methods, n_jobs=2)
        pd.testing.assert_frame_equal(serial.table.to_frame(), parallel.table.to_frame())
        again = SimulationService.run_monte_carlo(self.design, self.methods)
        pd.testing.assert_frame_equal(serial.table.to_frame(), again.table.to_frame())

    def test_table_shape(self):
        """Test de una fila por método y coeficiente."""
        run = SimulationService.run_monte_carlo(self.design, ("cc", "ht"))
        self.assertEqual(run.methods, ("CC", "IPW"))
        self.assertEqual(run.coef_names, ("beta0", "beta1", "beta2"))
        np.testing.assert_array_equal(run.truth, [1.0, 1.0, 2.0])
        self.assertEqual(len(run.table.rows), 6)

    def test_emit_replicates(self):
        """Test de un registro por réplica exitosa, método y coeficiente."""
        run = SimulationService.run_monte_carlo(self.design, self.methods)
        frame = SimulationService.emit_replicates(run)
        self.assertEqual(list(frame.columns), REPLICATE_COLUMNS)
        successes = sum(theta is not None for method in run.methods for theta in run.estimates[method])
        self.assertEqual(len(frame), 3 * successes)
        cc = frame[(frame["method"] == "CC") & (frame["coef"] == "beta0")]["estimate"].to_numpy()
        self.assertAlmostEqual(cc.mean() - 1.0, run.table.get("CC", "beta0").bias, places=12)

    def test_causal_replicates(self):
        """Test de un estudio causal chico con el ATE como único coeficiente."""
        design = SimDesign("causal", N=300, M_reps=3, seed=4)
        run = SimulationService.run_monte_carlo(design, ("IPW", "ET"))
        self.assertEqual(run.coef_names, ("ate",))
        np.testing.assert_array_equal(run.truth, [1.0])
        self.assertLess(abs(run.table.get("ET", "ate").bias), 1.0)
