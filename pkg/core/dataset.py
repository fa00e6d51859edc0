"""
Datos a nivel de unidad y lectura de CSV.

Un Dataset separa la parte siempre observada O de la parte que puede faltar M
(NaN donde δ=0), con el indicador δ y, opcionalmente, el tratamiento T.
"""
import logging
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from core.exceptions import ConflictingRoles, DimensionMismatch, MissingRequired, NonNumeric, ParseError

logger = logging.getLogger(__name__)

MISSING_TOKENS = ("", "NA")


def _as_matrix(values, rows=None):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if rows is not None and arr.shape[0] != rows:
        raise DimensionMismatch(f"Se esperaban {rows} filas y llegaron {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class Dataset:
    observed: np.ndarray
    missing: np.ndarray
    delta: np.ndarray
    treatment: Optional[np.ndarray] = None
    observed_columns: tuple = ()
    missing_columns: tuple = ()

    @classmethod
    def from_arrays(cls, observed, missing, delta=None, treatment=None, observed_columns=(), missing_columns=()):
        """
        Construye un Dataset validando dimensiones.

        Si delta es None se infiere de la falta de M (fila con algún NaN → δ=0).
        Las filas con δ=0 quedan con M en NaN.
        """
        observed = _as_matrix(observed)
        rows = observed.shape[0]
        missing = _as_matrix(missing, rows).copy()
        if delta is None:
            delta = (~np.isnan(missing).any(axis=1)).astype(float)
        delta = np.asarray(delta, dtype=float).ravel()
        if delta.shape[0] != rows:
            raise DimensionMismatch(f"δ tiene {delta.shape[0]} entradas para {rows} filas")
        if not np.all(np.isin(delta, (0.0, 1.0))):
            raise DimensionMismatch("δ debe ser 0/1")
        if not observed_columns:
            observed_columns = tuple(f"o{j + 1}" for j in range(observed.shape[1]))
        if not missing_columns:
            missing_columns = tuple(f"m{j + 1}" for j in range(missing.shape[1]))

        # un respondente tiene M completo
        gaps = np.isnan(missing) & (delta == 1)[:, None]
        if gaps.any():
            row, column = np.argwhere(gaps)[0]
            raise ParseError(
                "Falta M en una fila marcada como respondente (δ=1)",
                row=int(row) + 1,
                column=missing_columns[column],
            )
        missing[delta == 0] = np.nan
        if treatment is not None:
            treatment = np.asarray(treatment, dtype=float).ravel()
            if treatment.shape[0] != rows:
                raise DimensionMismatch(f"T tiene {treatment.shape[0]} entradas para {rows} filas")
        return cls(observed, missing, delta, treatment, tuple(observed_columns), tuple(missing_columns))

    @property
    def n(self):
        return self.observed.shape[0]

    @property
    def n_respondents(self):
        return int(self.delta.sum())

    @property
    def respondents(self):
        return self.delta == 1

    @property
    def missing_rate(self):
        return 1.0 - self.n_respondents / self.n if self.n else 0.0

    def take(self, indices):
        """Subconjunto (con repetición permitida) de unidades."""
        indices = np.asarray(indices, dtype=int)
        treatment = None if self.treatment is None else self.treatment[indices]
        return Dataset(
            self.observed[indices],
            self.missing[indices],
            self.delta[indices],
            treatment,
            self.observed_columns,
            self.missing_columns,
        )


@dataclass(frozen=True)
class ColumnRoles:
    """Roles de columnas del CSV declarados por el usuario."""

    outcome: Optional[str] = None
    treatment: Optional[str] = None
    delta: Optional[str] = None
    covariates: tuple = ()
    x1: tuple = ()
    x2: tuple = ()

    def assigned(self):
        single = [self.outcome, self.treatment, self.delta]
        return [name for name in single if name] + list(self.covariates) + list(self.x1) + list(self.x2)

    def validate(self, header=None):
        names = self.assigned()
        duplicated = sorted({name for name in names if names.count(name) > 1})
        if duplicated:
            raise ConflictingRoles(
                f"Columnas con más de un rol: {', '.join(duplicated)}. Asigná cada columna a un único rol."
            )
        if header is not None:
            absent = [name for name in names if name not in header]
            if absent:
                raise MissingRequired(
                    f"Columnas inexistentes en el encabezado: {', '.join(absent)}. Revisá los nombres."
                )
        return self


def _parse_error_location(message):
    match = re.search(r"(?:row|line)\s+(\d+)", message)
    return int(match.group(1)) if match else None


def read_frame(path):
    """
    Lee un CSV UTF-8 como texto, con "" y "NA" como faltantes.

    Raises:
        ParseError: CSV mal formado, con la fila donde falló el tokenizador
    """
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_values=[],
            encoding="utf-8",
            skipinitialspace=False,
        )
    except pd.errors.ParserError as e:
        raise ParseError(f"CSV mal formado en {path}: {e}", row=_parse_error_location(str(e)))
    except UnicodeDecodeError as e:
        raise ParseError(f"El archivo {path} no es UTF-8: {e}")
    except FileNotFoundError:
        raise ParseError(f"No existe el archivo {path}")
    return frame


def numeric_columns(frame, names):
    """
    Convierte columnas de texto a float; faltantes → NaN.

    Raises:
        NonNumeric: con la fila (1 = primera fila de datos) y la columna
    """
    out = np.empty((len(frame), len(names)), dtype=float)
    for j, name in enumerate(names):
        text = frame[name].str.strip()
        is_missing = text.isin(MISSING_TOKENS)
        values = pd.to_numeric(text.where(~is_missing, None), errors="coerce")
        bad = values.isna() & ~is_missing
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            raise NonNumeric(f"Valor no numérico '{frame[name].iloc[row - 1]}'", row=row, column=name)
        out[:, j] = values.to_numpy(dtype=float)
    return out


def read_dataset(path, roles, missing_role="outcome", observed_roles=("covariates",)):
    """
    Lee el CSV y arma el Dataset según los roles.

    Args:
        path: Ruta del CSV
        roles: ColumnRoles
        missing_role: Rol de la columna M ('outcome' o 'x2')
        observed_roles: Roles que forman O, en orden

    Returns:
        Dataset; δ sale de la columna delta si existe, si no de la falta de M
    """
    frame = read_frame(path)
    roles.validate(header=list(frame.columns))

    observed_names = []
    for role in observed_roles:
        value = getattr(roles, role)
        observed_names.extend([value] if isinstance(value, str) else list(value))
    missing_value = getattr(roles, missing_role)
    missing_names = [missing_value] if isinstance(missing_value, str) else list(missing_value)
    if not missing_names or not missing_names[0]:
        raise MissingRequired(f"Falta declarar la columna del rol '{missing_role}'")

    observed = numeric_columns(frame, observed_names)
    if np.isnan(observed).any():
        row = int(np.flatnonzero(np.isnan(observed).any(axis=1))[0]) + 1
        raise ParseError("Faltan valores en columnas siempre observadas", row=row)
    missing = numeric_columns(frame, missing_names)

    delta = None
    if roles.delta:
        delta = numeric_columns(frame, [roles.delta]).ravel()
    treatment = numeric_columns(frame, [roles.treatment]).ravel() if roles.treatment else None

    data = Dataset.from_arrays(
        observed,
        missing,
        delta=delta,
        treatment=treatment,
        observed_columns=observed_names,
        missing_columns=missing_names,
    )
    logger.info(f"Leídas {data.n} filas de {path}; tasa de faltantes {data.missing_rate:.3f}")
    return data
