"""
Logging bootstrap shared by the API server and the CLI.
"""
import logging
from typing import Optional

from app.core.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """
    Install a single stream handler on the ``app`` logger.

    Args:
        level: Log level name; defaults to settings.LOG_LEVEL

    Calling it again only changes the level.
    """
    global _configured

    logger = logging.getLogger("app")
    logger.setLevel((level or settings.LOG_LEVEL).upper())

    if _configured:
        return

    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)
    logger.propagate = False
    _configured = True
