"""
Tests para la configuración de corridas y la escritura de resultados.
"""
import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from aplicaciones.services import EstimateResult

from .exceptions import ConfigError, ConflictingRoles, IoError, MissingRequired, UnknownFlag
from .output import format_number, read_table, write_results
from .runconfig import parse_config

ATE_ARGS = ["estimate", "ate", "--data", "d.csv", "--treatment", "T", "--outcome", "Y", "--covariates", "x1,x2"]


class RunConfigTest(SimpleTestCase):
    """Tests para parse_config y build_config."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def config_file(self, text):
        path = Path(self.tmp.name) / "gecal.env"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_defaults(self):
        """Test de los valores por defecto."""
        config = parse_config(ATE_ARGS)
        self.assertEqual(config.subcommand, "ate")
        self.assertEqual(config.entropy, "et")
        self.assertEqual(config.K, 4)
        self.assertEqual(config.seed, 20240901)
        self.assertEqual(config.se_method, "sandwich")
        self.assertEqual(config.output_format, "csv")
        self.assertEqual(config.precision, "6")
        self.assertIsNone(config.normalization)
        self.assertEqual(config.column_roles.covariates, ("x1", "x2"))

    def test_missing_required_flag(self):
        """Test de flag requerido ausente."""
        with self.assertRaises(MissingRequired) as ctx:
            parse_config(["estimate", "ate", "--data", "d.csv", "--treatment", "T", "--covariates", "x1"])
        self.assertIn("--outcome", str(ctx.exception))

    def test_missing_target(self):
        """Test de estimate sin objetivo."""
        with self.assertRaises(MissingRequired):
            parse_config(["estimate", "--data", "d.csv"])

    def test_unknown_flag(self):
        """Test de flag desconocido."""
        with self.assertRaises(UnknownFlag):
            parse_config(ATE_ARGS + ["--bogus", "1"])

    def test_unknown_command(self):
        """Test de comando desconocido."""
        with self.assertRaises(UnknownFlag):
            parse_config(["fit"])

    def test_conflicting_roles(self):
        """Test de columna con dos roles."""
        with self.assertRaises(ConflictingRoles):
            parse_config(["estimate", "ssl", "--data", "d.csv", "--outcome", "Y", "--covariates", "Y,x1"])

    def test_flags_override_config_file(self):
        """Test de prioridad de los flags sobre el archivo --config."""
        path = self.config_file("ENTROPY=el\nSEED=3\nFOLDS=3\n")
        config = parse_config(ATE_ARGS + ["--config", path, "--entropy", "hd", "--seed", "7"])
        self.assertEqual(config.entropy, "hd")
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.K, 3)

    def test_config_file_supplies_required(self):
        """Test de flags requeridos tomados del archivo."""
        path = self.config_file("target=ssl\ndata=d.csv\noutcome=Y\ncovariates=x1,x2\nnormalize=true\n")
        config = parse_config(["estimate"], config_path=path)
        self.assertEqual(config.subcommand, "ssl")
        self.assertTrue(config.normalization)

    def test_config_file_unknown_key(self):
        """Test de clave desconocida en el archivo."""
        path = self.config_file("ENTROPIA=et\n")
        with self.assertRaises(UnknownFlag):
            parse_config(ATE_ARGS + ["--config", path])

    def test_invalid_values(self):
        """Test de valores inválidos."""
        with self.assertRaises(ConfigError):
            parse_config(ATE_ARGS + ["--entropy", "kl"])
        with self.assertRaises(ConfigError):
            parse_config(ATE_ARGS + ["--format", "xml"])
        with self.assertRaises(ConfigError):
            parse_config(ATE_ARGS + ["--seed", "abc"])

    def test_normalize_flags_exclusive(self):
        """Test de --normalize y --no-normalize juntos."""
        with self.assertRaises(ConfigError):
            parse_config(ATE_ARGS + ["--normalize", "--no-normalize"])
        self.assertFalse(parse_config(ATE_ARGS + ["--no-normalize"]).normalization)

    def test_simulate_flags(self):
        """Test de los flags de simulate."""
        config = parse_config(["simulate", "ssl", "--or", "2", "--ps", "2", "--reps", "10", "--methods", "CC,ET"])
        self.assertEqual((config.or_model, config.ps_model, config.reps), (2, 2, 10))
        self.assertEqual(config.methods, ("CC", "ET"))

    def test_weights_needs_delta_source(self):
        """Test de weights sin --outcome ni --delta."""
        with self.assertRaises(MissingRequired):
            parse_config(["weights", "--data", "d.csv", "--covariates", "x1"])


def _mean_result():
    return EstimateResult(
        target="ssl",
        method="ET",
        theta_hat=np.array([2.0]),
        se=np.array([0.5]),
        cov=None,
        coef_names=("mean",),
        n=10,
        n_respondents=6,
    )


class OutputTest(SimpleTestCase):
    """Tests para la escritura de tablas."""

    def test_format_number(self):
        """Test de 6 cifras significativas, precisión completa y NA."""
        self.assertEqual(format_number(1.0 / 3.0), "0.333333")
        self.assertEqual(format_number(1.0 / 3.0, "full"), repr(1.0 / 3.0))
        self.assertEqual(format_number(float("nan")), "NA")
        self.assertEqual(format_number(np.int64(12)), "12")

    def test_confidence_interval_columns(self):
        """Test de IC al 95%: 2 ± 1.959964·0.5."""
        stream = io.StringIO()
        write_results(_mean_result(), stream=stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], "target,coef,estimate,se,ci_low,ci_high,entropy,n,n_respondents")
        self.assertEqual(lines[1], "ssl,mean,2,0.5,1.02002,2.97998,et,10,6")

    def test_jsonl(self):
        """Test de salida JSON lines."""
        stream = io.StringIO()
        write_results(_mean_result(), fmt="jsonl", stream=stream)
        record = json.loads(stream.getvalue().splitlines()[0])
        self.assertEqual(record["coef"], "mean")
        self.assertAlmostEqual(record["ci_high"], 2.97998)

    def test_file_round_trip(self):
        """Test de escritura a archivo y relectura."""
        with tempfile.TemporaryDirectory() as tmp:
            path = str(Path(tmp) / "out.csv")
            write_results(_mean_result(), path=path, precision="full")
            frame = read_table(path)
        self.assertAlmostEqual(frame.loc[0, "ci_low"], 2.0 - 1.959964 * 0.5, places=12)

    def test_unwritable_path(self):
        """Test de ruta no escribible."""
        with self.assertRaises(IoError):
            write_results(_mean_result(), path="/nonexistent-dir/out.csv")
