import logging
import sys
from typing import Optional

from siamprint.core.config import Settings, settings as default_settings

PACKAGE_LOGGER = 'siamprint'


def configure_logging(
    settings: Optional[Settings] = None,
    level: Optional[str] = None,
) -> logging.Logger:
    settings = settings or default_settings
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(settings.log_format))
    logger.addHandler(handler)
    logger.setLevel((level or settings.log_level).upper())
    return logger
