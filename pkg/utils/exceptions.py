"""Gerarchia delle eccezioni del progetto.

I due rami principali decidono il codice di uscita della CLI:
ValidationError -> 1, NumericError / FormatError -> 2.
"""


class SoftDiamondError(Exception):
    """Base di tutti gli errori del progetto"""
    exit_code = 2


class ValidationError(SoftDiamondError, ValueError):
    exit_code = 1


class NumericError(SoftDiamondError, ArithmeticError):
    exit_code = 2


class FormatError(SoftDiamondError):
    exit_code = 2


# --- validazione ---

class InvalidParameter(ValidationError):
    pass


class NonSymmetric(ValidationError):
    pass


class ConfigError(ValidationError):
    """Chiave sconosciuta o valore non valido nel RunConfig"""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ShapeMismatch(ValidationError):
    pass


class EmptyModel(ValidationError):
    pass


class EmptyLevelSet(ValidationError):
    pass


class InfeasibleBudget(ValidationError):
    pass


# --- numerici ---

class QuadratureFailure(NumericError):
    pass


class DegenerateDensity(NumericError):
    pass


class NonFiniteGradient(NumericError):
    def __init__(self, message: str, step: int = -1, param: str = ''):
        super().__init__(message)
        self.step = step
        self.param = param


class RootNotBracketed(NumericError):
    pass


# --- formati file ---

class ChecksumMismatch(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class MalformedRecord(FormatError):
    def __init__(self, path: str, offset: int, message: str = ''):
        super().__init__(f"{path} @ byte {offset}: {message or 'record incompleto'}")
        self.path = path
        self.offset = offset


class LabelOutOfRange(FormatError):
    pass


class TableDomainWarning(UserWarning):
    """Troppi pesi saturano ai bordi della tabella: epsilon troppo piccolo"""
