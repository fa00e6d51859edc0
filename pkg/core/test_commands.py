"""
Tests para los comandos estimate, weights y simulate de gecal.
"""
import io
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from simulacion.generators import SimDesign, gen_causal, gen_misscov


def _run(*args, **options):
    out = io.StringIO()
    call_command(*args, stdout=out, stderr=io.StringIO(), **options)
    return out.getvalue()


class CommandTestBase(SimpleTestCase):
    def setUp(self):
        """Configuración inicial para cada test."""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        rng = np.random.default_rng(5)
        sample = gen_misscov(SimDesign("misscov", N=300, M_reps=2), rng)
        self.misscov_path = self.write_frame(
            pd.DataFrame({"x1": sample.X1[:, 0], "x2": sample.X2_observed, "y": sample.Y}), "misscov.csv"
        )
        self.n_respondents = int(sample.delta.sum())

    def write_frame(self, frame, name):
        path = str(Path(self.tmp.name) / name)
        frame.to_csv(path, index=False, na_rep="")
        return path


class EstimateCommandTest(CommandTestBase):
    """Tests para el comando estimate."""

    def test_misscov_output(self):
        """Test de la tabla de estimate misscov."""
        output = _run("estimate", "misscov", data=self.misscov_path, x1="x1", x2="x2", outcome="y", entropy="hd")
        lines = output.splitlines()
        self.assertEqual(lines[0], "target,coef,estimate,se,ci_low,ci_high,entropy,n,n_respondents")
        self.assertEqual(len(lines), 4)
        self.assertEqual([line.split(",")[1] for line in lines[1:]], ["(Intercept)", "x1", "x2"])
        for line in lines[1:]:
            fields = line.split(",")
            self.assertEqual(fields[6], "hd")
            self.assertEqual(fields[7], "300")
            self.assertEqual(fields[8], str(self.n_respondents))
            self.assertGreater(float(fields[3]), 0.0)

    def test_deterministic_output(self):
        """Test de salida idéntica con la misma semilla."""
        options = dict(data=self.misscov_path, x1="x1", x2="x2", outcome="y", seed=9)
        self.assertEqual(_run("estimate", "misscov", **options), _run("estimate", "misscov", **options))

    def test_ate_output(self):
        """Test de estimate ate: θ₁, θ₀ y su diferencia."""
        sample = gen_causal(SimDesign("causal", N=400, M_reps=2), np.random.default_rng(2))
        frame = pd.DataFrame(sample.X, columns=["x1", "x2", "x3", "x4"])
        frame["T"] = sample.T.astype(int)
        frame["Y"] = sample.Y
        path = self.write_frame(frame, "ate.csv")
        output = _run(
            "estimate", "ate", data=path, treatment="T", outcome="Y", covariates="x1,x2,x3,x4", precision="full"
        )
        table = pd.read_csv(io.StringIO(output))
        self.assertEqual(list(table["coef"]), ["theta1", "theta0", "ate"])
        estimates = table["estimate"].to_numpy()
        self.assertAlmostEqual(estimates[2], estimates[0] - estimates[1], places=10)

    def test_missing_required_exit_code(self):
        """Test de código de salida 2 por flag faltante."""
        with self.assertRaises(CommandError) as ctx:
            _run("estimate", "ate", data=self.misscov_path)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_non_numeric_exit_code(self):
        """Test de código de salida 3 por dato no numérico."""
        path = self.write_frame(pd.DataFrame({"x1": ["1", "a"], "x2": ["1", ""], "y": ["1", "2"]}), "bad.csv")
        with self.assertRaises(CommandError) as ctx:
            _run("estimate", "misscov", data=path, x1="x1", x2="x2", outcome="y")
        self.assertEqual(ctx.exception.returncode, 3)


class WeightsCommandTest(CommandTestBase):
    """Tests para el comando weights."""

    def test_weights_balance_covariates(self):
        """Test de pesos que reproducen los totales de las covariables."""
        frame = pd.read_csv(self.misscov_path)
        frame["r"] = frame["x2"].notna().astype(int)
        path = self.write_frame(frame[["x1", "y", "r"]], "weights.csv")
        output = _run("weights", data=path, covariates="x1,y", delta="r", precision="full")
        table = pd.read_csv(io.StringIO(output))
        self.assertEqual(list(table.columns), ["unit", "delta", "pi_hat", "weight"])
        self.assertEqual(len(table), 300)
        self.assertTrue(np.all(table.loc[table["delta"] == 0, "weight"] == 0))
        weights = table["weight"].to_numpy()
        for column in ("x1", "y"):
            self.assertAlmostEqual(weights @ frame[column].to_numpy(), frame[column].sum(), delta=1e-5)

    def test_one_class_exit_code(self):
        """Test de código de salida 4 cuando δ no varía."""
        frame = pd.read_csv(self.misscov_path)
        path = self.write_frame(frame[["x1", "y"]], "complete.csv")
        with self.assertRaises(CommandError) as ctx:
            _run("weights", data=path, covariates="x1", outcome="y")
        self.assertEqual(ctx.exception.returncode, 4)


class SimulateCommandTest(SimpleTestCase):
    """Tests para el comando simulate."""

    def test_small_study_is_deterministic(self):
        """Test de simulate con semilla fija: salida idéntica y columnas de métricas."""
        options = dict(reps=3, n=200, seed=5, methods="CC,IPW")
        first = _run("simulate", "misscov", **options)
        self.assertEqual(first, _run("simulate", "misscov", **options))
        table = pd.read_csv(io.StringIO(first))
        self.assertEqual(
            list(table.columns), ["method", "coef", "bias_x10", "se_x10", "rmse_x10", "mc_se_x10", "failures"]
        )
        self.assertEqual(len(table), 6)

    def test_replicates_file(self):
        """Test del CSV de estimaciones por réplica."""
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "reps.csv")
            _run("simulate", "misscov", reps=2, n=200, seed=5, methods="CC", replicates=path)
            table = pd.read_csv(path)
        self.assertEqual(list(table.columns), ["replicate", "method", "coef", "estimate"])
        self.assertEqual(len(table), 6)
