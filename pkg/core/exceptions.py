"""
Jerarquía de errores de gecal.
Cada familia lleva el código de salida que usan los comandos de management.
"""
from config import constants


class GecalError(Exception):
    """Error base del proyecto."""

    exit_code = constants.EXIT_NUMERICAL_ERROR


# Configuración (código 2)

class ConfigError(GecalError, ValueError):
    exit_code = constants.EXIT_CONFIG_ERROR


class UnknownFlag(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass


class ConflictingRoles(ConfigError):
    pass


# Datos (código 3)

class DataError(GecalError, ValueError):
    exit_code = constants.EXIT_DATA_ERROR


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"fila {row}")
        if column is not None:
            location.append(f"columna '{column}'")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")
        self.row = row
        self.column = column


class NonNumeric(ParseError):
    pass


class DimensionMismatch(DataError):
    pass


class OneArmEmpty(DataError):
    pass


class TooFewRespondents(DataError):
    pass


class EmptyTrainingFold(DataError):
    pass


class IoError(DataError):
    pass


# Numéricos (código 4)

class NumericalError(GecalError, ArithmeticError):
    exit_code = constants.EXIT_NUMERICAL_ERROR


class DomainError(NumericalError, ValueError):
    def __init__(self, entropy, value, domain):
        super().__init__(
            f"Valor {value!r} fuera del dominio abierto {domain} para la entropía {entropy}"
        )
        self.entropy = entropy
        self.value = value
        self.domain = domain


class DualOverflowError(NumericalError, OverflowError):
    pass


class InfeasibleStart(NumericalError):
    pass


class InfeasibleLambda(NumericalError):
    pass


class LineSearchStall(NumericalError):
    pass


class OneClassError(NumericalError):
    pass


class SeparationError(NumericalError):
    pass


class RankDeficientRespondents(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class SingularGram(NumericalError):
    pass


class SingularTau(NumericalError):
    pass


class OuterDivergence(NumericalError):
    pass


class TooManyFailures(NumericalError):
    pass


class AllReplicatesFailed(NumericalError):
    pass
