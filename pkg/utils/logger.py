import logging
import sys

from config import Config


def setup_logger(name=__name__, level=None, log_file=None):
    """Configura un logger con output su console (stderr) e file"""
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO))

    # Già configurato: niente handler duplicati
    if logger.handlers:
        return logger

    # Formattatore comune
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    # Handler per console: stderr, lo stdout resta ai CSV
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # Handler per file
    log_file = Config.LOG_FILE if log_file is None else log_file
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger


# Logger globale
logger = setup_logger('softdiamond')
