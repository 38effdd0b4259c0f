# handlers/errors.py
from utils.exceptions import SoftDiamondError, ValidationError
from utils.logger import logger

error_logger = logger.getChild('errors')


def error_handler(exc: BaseException) -> int:
    """Registra l'errore e restituisce il codice di uscita (1 validazione, 2 il resto)"""
    if isinstance(exc, ValidationError):
        error_logger.error(f"❌ Parametri non validi: {exc}")
        return exc.exit_code
    if isinstance(exc, SoftDiamondError):
        error_logger.error(f"❌ {type(exc).__name__}: {exc}", exc_info=exc)
        return exc.exit_code
    error_logger.error(f"❌ Errore inatteso: {exc}", exc_info=exc)
    return 2
