# /phasekaczmarz/phasekaczmarz/__init__.py

import os
import logging
import sys
from concurrent_log_handler import ConcurrentRotatingFileHandler

from .config import Config

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'


def configure_logging(config_class=Config):
    """Sets up the package logger once; safe to call repeatedly."""
    logger.setLevel(getattr(logging, str(config_class.LOG_LEVEL).upper(), logging.INFO))

    if getattr(logger, '_phasekaczmarz_configured', False):
        return logger

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
    logger.addHandler(stream_handler)

    if config_class.LOG_DIR:
        os.makedirs(config_class.LOG_DIR, exist_ok=True)

        # Concurrent-safe handler: trial workers may log from several threads.
        file_handler = ConcurrentRotatingFileHandler(
            os.path.join(config_class.LOG_DIR, 'phasekaczmarz.log'),
            maxBytes=10240,
            backupCount=10
        )
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

    logger._phasekaczmarz_configured = True
    logger.debug('phasekaczmarz logging configured')
    return logger
