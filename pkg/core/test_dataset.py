"""
Tests para la lectura de CSV y el armado de Dataset.
"""
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .dataset import ColumnRoles, Dataset, read_dataset
from .exceptions import ConflictingRoles, DimensionMismatch, MissingRequired, NonNumeric, ParseError


class DatasetTest(SimpleTestCase):
    """Tests para Dataset.from_arrays y take."""

    def test_delta_inferred_from_missing(self):
        """Test de δ inferido de los NaN de M."""
        data = Dataset.from_arrays(np.arange(4.0), [1.0, np.nan, 3.0, np.nan])
        np.testing.assert_array_equal(data.delta, [1, 0, 1, 0])
        self.assertEqual(data.n_respondents, 2)
        self.assertAlmostEqual(data.missing_rate, 0.5)

    def test_explicit_delta_masks_missing(self):
        """Test de que δ=0 deja M en NaN aunque venga un valor."""
        data = Dataset.from_arrays(np.zeros(3), [1.0, 5.0, 3.0], delta=[1, 0, 1])
        self.assertTrue(np.isnan(data.missing[1, 0]))

    def test_respondent_without_outcome(self):
        """Test de una fila con δ=1 y M faltante."""
        with self.assertRaises(ParseError) as ctx:
            Dataset.from_arrays(np.zeros(3), [1.0, np.nan, 3.0], delta=[1, 1, 1], missing_columns=("y",))
        self.assertEqual((ctx.exception.row, ctx.exception.column), (2, "y"))

    def test_dimension_mismatch(self):
        """Test de filas inconsistentes."""
        with self.assertRaises(DimensionMismatch):
            Dataset.from_arrays(np.zeros(3), [1.0, 2.0])
        with self.assertRaises(DimensionMismatch):
            Dataset.from_arrays(np.zeros(2), [1.0, 2.0], delta=[1, 2])

    def test_take_with_repetition(self):
        """Test de subconjunto con repetición (bootstrap)."""
        data = Dataset.from_arrays(np.arange(3.0), [1.0, 2.0, 3.0], treatment=[1, 0, 1])
        sample = data.take([2, 2, 0])
        np.testing.assert_array_equal(sample.missing[:, 0], [3.0, 3.0, 1.0])
        np.testing.assert_array_equal(sample.treatment, [1.0, 1.0, 1.0])


class ReadDatasetTest(SimpleTestCase):
    """Tests para read_dataset y los errores de parseo."""

    def setUp(self):
        """Configuración inicial para cada test."""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text, name="datos.csv"):
        path = Path(self.tmp.name) / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_missing_tokens(self):
        """Test de celdas vacías y "NA" como faltantes."""
        path = self.write("x,y\n1,\n2,NA\n3,4\n")
        data = read_dataset(path, ColumnRoles(outcome="y", covariates=("x",)))
        np.testing.assert_array_equal(data.delta, [0, 0, 1])
        np.testing.assert_array_equal(data.observed[:, 0], [1, 2, 3])
        self.assertEqual(data.observed_columns, ("x",))

    def test_misscov_roles(self):
        """Test de O = (x1, y) y M = x2."""
        path = self.write("x1,x2,y\n0.5,1,2\n-1,,3\n2,0,1\n")
        roles = ColumnRoles(outcome="y", x1=("x1",), x2=("x2",))
        data = read_dataset(path, roles, missing_role="x2", observed_roles=("x1", "outcome"))
        np.testing.assert_array_equal(data.delta, [1, 0, 1])
        np.testing.assert_array_equal(data.observed[:, 1], [2, 3, 1])

    def test_explicit_delta_column(self):
        """Test de la columna δ explícita."""
        path = self.write("x,y,r\n1,2,1\n2,3,0\n")
        data = read_dataset(path, ColumnRoles(outcome="y", delta="r", covariates=("x",)))
        np.testing.assert_array_equal(data.delta, [1, 0])

    def test_delta_column_with_empty_outcome(self):
        """Test de la columna δ marcando como respondente una fila sin y."""
        path = self.write("x,y,r\n1,2,1\n2,,1\n")
        with self.assertRaises(ParseError) as ctx:
            read_dataset(path, ColumnRoles(outcome="y", delta="r", covariates=("x",)))
        self.assertEqual((ctx.exception.row, ctx.exception.column), (2, "y"))

    def test_wrong_field_count(self):
        """Test de CSV con una fila de más campos."""
        path = self.write("a,b\n1,2\n3,4,5,6\n")
        with self.assertRaises(ParseError) as ctx:
            read_dataset(path, ColumnRoles(outcome="b", covariates=("a",)))
        self.assertEqual(ctx.exception.row, 3)

    def test_unclosed_quote(self):
        """Test de comillas sin cerrar."""
        path = self.write('a,b\n1,"2\n3,4\n')
        with self.assertRaises(ParseError):
            read_dataset(path, ColumnRoles(outcome="b", covariates=("a",)))

    def test_non_numeric(self):
        """Test de celda no numérica con fila y columna."""
        path = self.write("x,y\n1,2\n3,abc\n")
        with self.assertRaises(NonNumeric) as ctx:
            read_dataset(path, ColumnRoles(outcome="y", covariates=("x",)))
        self.assertEqual(ctx.exception.row, 2)
        self.assertEqual(ctx.exception.column, "y")

    def test_missing_observed_value(self):
        """Test de faltante en una covariable siempre observada."""
        path = self.write("x,y\n1,2\n,3\n")
        with self.assertRaises(ParseError):
            read_dataset(path, ColumnRoles(outcome="y", covariates=("x",)))

    def test_missing_file(self):
        """Test de archivo inexistente."""
        with self.assertRaises(ParseError):
            read_dataset(str(Path(self.tmp.name) / "no.csv"), ColumnRoles(outcome="y", covariates=("x",)))

    def test_absent_column(self):
        """Test de columna declarada que no está en el encabezado."""
        path = self.write("x,y\n1,2\n")
        with self.assertRaises(MissingRequired):
            read_dataset(path, ColumnRoles(outcome="z", covariates=("x",)))

    def test_conflicting_roles(self):
        """Test de una columna con dos roles."""
        with self.assertRaises(ConflictingRoles):
            ColumnRoles(outcome="y", covariates=("y", "x")).validate()
