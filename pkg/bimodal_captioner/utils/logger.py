"""
Logging - Console and file logging for batch jobs
"""

import logging
import os
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "bimodal_captioner"
LEVEL_ENV = "BMT_LOG_LEVEL"

_configured = False


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """
    Configure the package logger.

    Console output goes to stderr through rich; an optional log file receives
    timestamped plain-text records.

    Args:
        level: Log level name (default: $BMT_LOG_LEVEL or INFO)
        log_file: Optional path of a log file to append to
    """
    global _configured

    level_name = (level or os.environ.get(LEVEL_ENV, "INFO")).upper()
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(getattr(logging, level_name, logging.INFO))

    if not _configured:
        handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
        _configured = True

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logger.addHandler(file_handler)


def get_logger(name: str) -> logging.Logger:
    """
    Get a module logger under the package namespace.

    Args:
        name: Module name, usually ``__name__``

    Returns:
        The logger
    """
    if not name.startswith(ROOT_LOGGER):
        name = f"{ROOT_LOGGER}.{name}"
    return logging.getLogger(name)
