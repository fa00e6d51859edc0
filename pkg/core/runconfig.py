"""
Configuración de una corrida de la CLI.

Los flags y el archivo --config (KEY=VALUE, leído con python-dotenv) se
fusionan con prioridad de los flags; los defaults se aplican al final.
"""
import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from django.conf import settings
from dotenv import dotenv_values

from config import constants
from core.dataset import ColumnRoles
from core.entropy import EntropyKind
from core.exceptions import ConfigError, MissingRequired, UnknownFlag

logger = logging.getLogger(__name__)

COMMANDS = ("estimate", "simulate", "weights")
ESTIMATE_TARGETS = ("ate", "ssl", "misscov")
SIMULATE_SETTINGS = ("causal", "ssl", "misscov")

# Flags comunes: (flag, destino, tipo, ayuda)
_SHARED_FLAGS = (
    ("--entropy", "entropy", str, "Entropía: sq, el, et o hd (default et)"),
    ("--folds", "folds", int, "Folds de cross-fitting K (default 4)"),
    ("--seed", "seed", int, "Semilla (default 20240901)"),
    ("--family", "family", str, "Familia del predictor: linear, logistic o spline"),
    ("--spline-knots", "spline_knots", int, "Nudos interiores por covariable (default 5)"),
    ("--ps-trunc", "ps_trunc", float, "Recorte ε del propensity score (default 0)"),
    ("--output", "output", str, "Archivo de salida (default: salida estándar)"),
    ("--format", "format", str, "Formato de salida: csv o jsonl"),
    ("--precision", "precision", str, "Dígitos: 6 o full"),
    ("--jobs", "jobs", int, "Procesos de joblib"),
    ("--config", "config", str, "Archivo KEY=VALUE con valores por defecto"),
)

_ESTIMATE_FLAGS = (
    ("--data", "data", str, "CSV de entrada"),
    ("--outcome", "outcome", str, "Columna del resultado"),
    ("--treatment", "treatment", str, "Columna del tratamiento (ate)"),
    ("--delta", "delta", str, "Columna explícita del indicador de respuesta"),
    ("--covariates", "covariates", str, "Covariables separadas por coma"),
    ("--x1", "x1", str, "Covariables siempre observadas (misscov)"),
    ("--x2", "x2", str, "Covariable con faltantes (misscov)"),
    ("--mechanism", "mechanism", str, "Mecanismo ssl: mar o mcar"),
    ("--se", "se", str, "Error estándar: sandwich o bootstrap"),
    ("--boot-b", "boot_b", int, "Remuestras bootstrap (default 500)"),
    ("--ci-level", "ci_level", float, "Nivel de los intervalos (default 0.95)"),
)

_SIMULATE_FLAGS = (
    ("--or", "or_model", int, "Modelo de resultado: 1 o 2"),
    ("--ps", "ps_model", int, "Modelo de propensity score: 1 o 2"),
    ("--reps", "reps", int, "Réplicas Monte Carlo (default 200)"),
    ("--n", "n", int, "Tamaño muestral (n + N en ssl)"),
    ("--n-labeled", "n_labeled", int, "Etiquetados esperados en ssl MCAR"),
    ("--methods", "methods", str, "Métodos separados por coma"),
    ("--replicates", "replicates", str, "CSV con las estimaciones por réplica"),
)

_WEIGHTS_FLAGS = (
    ("--data", "data", str, "CSV de entrada"),
    ("--outcome", "outcome", str, "Columna con faltantes (define δ si no hay --delta)"),
    ("--delta", "delta", str, "Columna explícita del indicador de respuesta"),
    ("--covariates", "covariates", str, "Covariables a balancear separadas por coma"),
)

POSITIONALS = {"estimate": ("target", ESTIMATE_TARGETS), "simulate": ("setting", SIMULATE_SETTINGS)}


def flags_for(command):
    extra = {"estimate": _ESTIMATE_FLAGS, "simulate": _SIMULATE_FLAGS, "weights": _WEIGHTS_FLAGS}[command]
    return _SHARED_FLAGS + extra


def add_arguments(parser, command, positional_optional=False):
    """Registra los argumentos del comando; los defaults quedan en None para fusionar con --config."""
    if command in POSITIONALS:
        name, choices = POSITIONALS[command]
        parser.add_argument(name, choices=choices, nargs="?" if positional_optional else None)
    for flag, dest, kind, help_text in flags_for(command):
        parser.add_argument(flag, dest=dest, type=kind, default=None, help=help_text)
    if command != "simulate":
        group = parser.add_mutually_exclusive_group()
        group.add_argument("--normalize", dest="normalize", action="store_true", default=None)
        group.add_argument("--no-normalize", dest="normalize", action="store_false")


@dataclass(frozen=True)
class RunConfig:
    command: str
    subcommand: Optional[str] = None
    data_path: Optional[str] = None
    column_roles: ColumnRoles = field(default_factory=ColumnRoles)
    entropy: str = constants.DEFAULT_ENTROPY
    K: int = constants.DEFAULT_FOLDS
    seed: int = constants.DEFAULT_SEED
    se_method: str = constants.DEFAULT_SE_METHOD
    output_path: Optional[str] = None
    bootstrap_b: int = constants.DEFAULT_BOOTSTRAP_B
    family: str = constants.DEFAULT_FAMILY
    spline_knots: int = constants.DEFAULT_SPLINE_KNOTS
    ps_truncation: float = 0.0
    normalization: Optional[bool] = None
    output_format: str = "csv"
    precision: str = "6"
    ci_level: float = constants.DEFAULT_CI_LEVEL
    n_jobs: int = 1
    mechanism: str = "mar"
    or_model: int = 1
    ps_model: int = 1
    reps: int = constants.DEFAULT_REPS
    n: Optional[int] = None
    n_labeled: int = constants.SSL_LABELED_SIZE
    methods: tuple = ()
    replicates_path: Optional[str] = None


class _RaisingParser(argparse.ArgumentParser):
    def error(self, message):
        if "unrecognized arguments" in message:
            raise UnknownFlag(f"{message}. Revisá `gecal {self.prog} --help`.")
        if "required" in message:
            raise MissingRequired(message)
        raise ConfigError(message)


def _split(value):
    if value is None or value == "":
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(part.strip() for part in str(value).split(",") if part.strip())


def read_config_file(path, command):
    """
    Lee un archivo KEY=VALUE; las claves son nombres de flag con guiones o guiones bajos.

    Raises:
        UnknownFlag: clave que no corresponde a ningún flag del comando
    """
    if not Path(path).is_file():
        raise ConfigError(f"No existe el archivo de configuración {path}")
    valid = {dest for _, dest, _, _ in flags_for(command)} | {"normalize"}
    if command in POSITIONALS:
        valid.add(POSITIONALS[command][0])
    aliases = {"or": "or_model", "ps": "ps_model"}
    values = {}
    for key, value in dotenv_values(path).items():
        name = key.strip().lower().lstrip("-").replace("-", "_")
        name = aliases.get(name, name)
        if name not in valid or name == "config":
            raise UnknownFlag(f"Clave desconocida '{key}' en {path}. Usá nombres de flag de `{command}`.")
        values[name] = value
    return values


def _coerce(name, value, command):
    if value is None:
        return None
    kinds = {dest: kind for _, dest, kind, _ in flags_for(command)}
    if name == "normalize":
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "si", "sí", "on")
    kind = kinds.get(name, str)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Valor inválido para --{name.replace('_', '-')}: '{value}'")


def _require(values, names, context):
    missing = [name for name in names if not values.get(name)]
    if missing:
        flag = f"--{missing[0].replace('_', '-')}"
        raise MissingRequired(f"Falta {flag} para {context}. Agregalo a la línea de comandos o al --config.")


def build_config(command, options):
    """
    Fusiona --config con los flags (los flags ganan), valida y completa defaults.

    Args:
        command: estimate, simulate o weights
        options: dict de argparse (None = flag ausente)

    Returns:
        RunConfig
    """
    if command not in COMMANDS:
        raise UnknownFlag(f"Comando desconocido '{command}'. Opciones: {', '.join(COMMANDS)}")
    values = {}
    if options.get("config"):
        values.update(read_config_file(options["config"], command))
    for name, value in options.items():
        if value is not None and name != "config":
            values[name] = value
    values = {name: _coerce(name, value, command) for name, value in values.items()}

    subcommand = None
    if command in POSITIONALS:
        name, choices = POSITIONALS[command]
        subcommand = values.get(name)
        if subcommand not in choices:
            raise MissingRequired(f"Falta el {name} ({', '.join(choices)}) de `{command}`.")

    roles = ColumnRoles(
        outcome=values.get("outcome"),
        treatment=values.get("treatment"),
        delta=values.get("delta"),
        covariates=_split(values.get("covariates")),
        x1=_split(values.get("x1")),
        x2=_split(values.get("x2")),
    ).validate()

    if command in ("estimate", "weights"):
        _require(values, ["data"], command)
    if command == "estimate":
        needed = {
            "ate": ["treatment", "outcome", "covariates"],
            "ssl": ["outcome", "covariates"],
            "misscov": ["outcome", "x1", "x2"],
        }[subcommand]
        _require(values, needed, f"estimate {subcommand}")
    if command == "weights":
        _require(values, ["covariates"], command)
        if not values.get("outcome") and not values.get("delta"):
            raise MissingRequired("`weights` necesita --outcome o --delta para definir δ.")

    entropy = EntropyKind.from_token(values.get("entropy", constants.DEFAULT_ENTROPY)).value
    output_format = values.get("format", "csv")
    if output_format not in ("csv", "jsonl"):
        raise ConfigError(f"Formato '{output_format}' inválido. Usá csv o jsonl.")
    precision = str(values.get("precision", "6"))
    if precision not in ("6", "full"):
        raise ConfigError(f"Precisión '{precision}' inválida. Usá 6 o full.")
    se_method = values.get("se", constants.DEFAULT_SE_METHOD)
    if se_method not in ("sandwich", "bootstrap"):
        raise ConfigError(f"--se '{se_method}' inválido. Usá sandwich o bootstrap.")
    mechanism = str(values.get("mechanism", "mar")).lower()
    if mechanism not in ("mar", "mcar"):
        raise ConfigError(f"--mechanism '{mechanism}' inválido. Usá mar o mcar.")

    config = RunConfig(
        command=command,
        subcommand=subcommand,
        data_path=values.get("data"),
        column_roles=roles,
        entropy=entropy,
        K=values.get("folds", constants.DEFAULT_FOLDS),
        seed=values.get("seed", constants.DEFAULT_SEED),
        se_method=se_method,
        output_path=values.get("output"),
        bootstrap_b=values.get("boot_b", constants.DEFAULT_BOOTSTRAP_B),
        family=values.get("family", constants.DEFAULT_FAMILY),
        spline_knots=values.get("spline_knots", constants.DEFAULT_SPLINE_KNOTS),
        ps_truncation=values.get("ps_trunc", 0.0),
        normalization=values.get("normalize"),
        output_format=output_format,
        precision=precision,
        ci_level=values.get("ci_level", constants.DEFAULT_CI_LEVEL),
        n_jobs=values.get("jobs", getattr(settings, "GECAL_N_JOBS", 1)),
        mechanism=mechanism,
        or_model=values.get("or_model", 1),
        ps_model=values.get("ps_model", 1),
        reps=values.get("reps", constants.DEFAULT_REPS),
        n=values.get("n"),
        n_labeled=values.get("n_labeled", constants.SSL_LABELED_SIZE),
        methods=_split(values.get("methods")),
        replicates_path=values.get("replicates"),
    )
    logger.debug(f"Configuración resuelta: {config}")
    return config


def parse_config(argv, config_path=None):
    """
    Parsea argv (comando primero) a un RunConfig.

    Args:
        argv: p. ej. ["estimate", "ate", "--data", "d.csv", ...]
        config_path: Archivo KEY=VALUE opcional (equivale a --config)

    Raises:
        UnknownFlag, MissingRequired, ConflictingRoles
    """
    if not argv:
        raise MissingRequired(f"Falta el comando ({', '.join(COMMANDS)}).")
    command, rest = argv[0], list(argv[1:])
    if command not in COMMANDS:
        raise UnknownFlag(f"Comando desconocido '{command}'. Opciones: {', '.join(COMMANDS)}")
    parser = _RaisingParser(prog=command, add_help=False)
    # el posicional puede venir del archivo de configuración
    add_arguments(parser, command, positional_optional=True)
    options = vars(parser.parse_args(rest))
    if config_path and not options.get("config"):
        options["config"] = config_path
    return build_config(command, options)
