"""
Escritura de resultados en CSV o JSON lines.

Los números salen con 6 cifras significativas ("%.6g") salvo --precision full,
de modo que la misma entrada produce bytes idénticos.
"""
import json
import logging
import math
import sys

import numpy as np
import pandas as pd

from config import constants
from core.exceptions import IoError

logger = logging.getLogger(__name__)

ESTIMATE_COLUMNS = ["target", "coef", "estimate", "se", "ci_low", "ci_high", "entropy", "n", "n_respondents"]
WEIGHT_COLUMNS = ["unit", "delta", "pi_hat", "weight"]


def format_number(value, precision="6"):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "NA"
        if precision == "full":
            return repr(float(value))
        return f"{float(value):.{constants.OUTPUT_SIGNIFICANT_DIGITS}g}"
    return str(value)


def _json_value(value, precision):
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return None
        return float(format_number(value, precision))
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def render_table(frame, fmt="csv", precision="6"):
    """Texto de la tabla: CSV con encabezado o un objeto JSON por línea."""
    if fmt == "jsonl":
        lines = [
            json.dumps({column: _json_value(row[column], precision) for column in frame.columns}, ensure_ascii=False)
            for _, row in frame.iterrows()
        ]
        return "".join(f"{line}\n" for line in lines)

    formatted = frame.copy()
    for column in formatted.columns:
        formatted[column] = [format_number(value, precision) for value in frame[column].tolist()]
    return formatted.to_csv(index=False, lineterminator="\n")


def write_table(frame, path=None, fmt="csv", precision="6", stream=None):
    """
    Escribe la tabla en path, o en stream (salida estándar) si path es None o "-".

    Raises:
        IoError: no se pudo escribir el archivo
    """
    text = render_table(frame, fmt, precision)
    if path in (None, "-"):
        (stream or sys.stdout).write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as e:
        raise IoError(f"No se pudo escribir {path}: {e}")
    logger.info(f"Escritas {len(frame)} filas en {path}")


def estimate_frame(result, ci_level=constants.DEFAULT_CI_LEVEL):
    """Tabla de estimaciones con columnas target,coef,estimate,se,ci_low,ci_high,entropy,n,n_respondents."""
    return pd.DataFrame(list(result.rows(ci_level)), columns=ESTIMATE_COLUMNS)


def write_results(result, path=None, fmt="csv", precision="6", ci_level=constants.DEFAULT_CI_LEVEL, stream=None):
    """Escribe un EstimateResult o AteResult."""
    if hasattr(result, "as_estimate"):
        result = result.as_estimate()
    write_table(estimate_frame(result, ci_level), path, fmt, precision, stream)


def read_table(path):
    """Lee una tabla escrita por write_table (CSV o JSON lines según la extensión)."""
    if str(path).endswith(".jsonl"):
        return pd.read_json(path, lines=True)
    return pd.read_csv(path, na_values=["NA"], keep_default_na=False)
