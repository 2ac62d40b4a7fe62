"""
Jerarquía de errores del buscador.

Cada error lleva su código de salida para la CLI:
- 2: errores de validación (configuración, archivos mal formados, arquitecturas inválidas).
- 3: errores de entrada/salida.
- 1: fallos durante la búsqueda.
"""
import sys
from functools import wraps

import click


class NasError(Exception):
    exit_code = 1


# ===== VALIDACIÓN =====
class ValidationError(NasError):
    exit_code = 2


class ConfigError(ValidationError):
    pass


class SpaceTooLarge(ValidationError):
    pass


class MalformedActions(ValidationError):
    pass


class InvalidArchitecture(ValidationError):
    pass


class EmptyGroup(ValidationError):
    pass


class ZeroBaseline(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class DuplicateSignature(ValidationError):
    pass


class NonPositiveLatency(ValidationError):
    pass


class MissingEntry(ValidationError):
    def __init__(self, signature):
        super().__init__(f"No hay latencia registrada para el bloque {signature}")
        self.signature = signature


class DimensionMismatch(ValidationError):
    pass


class AllZeroVariations(ValidationError):
    pass


class InconsistentMap(ValidationError):
    pass


class UnknownArchitecture(ValidationError):
    pass


class BatchSizeMismatch(ValidationError):
    pass


# ===== ENTRADA / SALIDA =====
class DataIOError(NasError):
    exit_code = 3


# ===== BÚSQUEDA =====
class SearchError(NasError):
    exit_code = 1


class DegenerateSampling(SearchError):
    pass


class NonFiniteGradient(SearchError):
    pass


# ===== CLI =====
def handles_errors(command):
    """
    Decorador para comandos de la CLI: convierte los errores del dominio en un
    mensaje por stderr y el código de salida del error.
    """

    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except NasError as e:
            click.echo(f"❌ {type(e).__name__}: {e}", err=True)
            sys.exit(e.exit_code)

    return wrapper
