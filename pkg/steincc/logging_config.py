"""
Logging configuration for steincc

Only the ``steincc`` logger tree is configured, so embedding programs keep
their own root handlers. Numerical warnings raised by numpy or scipy inside
estimators are routed to the same handlers.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO, Tuple

PACKAGE_LOGGER = "steincc"
WARNINGS_LOGGER = "py.warnings"

# Repetitions may run in worker processes, so records carry the process name
LOG_FORMAT = "%(asctime)s - %(processName)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def parse_level(log_level: str) -> int:
    """
    Convert a level name to its numeric value

    Raises:
        ValueError: If the name is not a logging level
    """
    level = logging.getLevelName(str(log_level).upper())
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level: {log_level}")
    return level


def _build_handlers(level: int, log_file: Optional[Path], console_output: bool,
                    stream: Optional[TextIO]) -> Tuple[List[logging.Handler], List[str]]:
    formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)
    handlers: List[logging.Handler] = []
    errors: List[str] = []

    # stdout carries CSV rows
    if console_output:
        handlers.append(logging.StreamHandler(stream if stream is not None else sys.stderr))

    if log_file:
        log_file = Path(log_file)
        try:
            log_file.parent.mkdir(parents=True, exist_ok=True)
            handlers.append(logging.FileHandler(log_file))
        except OSError as e:
            errors.append(f"Failed to create log file handler for {log_file}: {e}")

    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
    return handlers, errors


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[Path] = None,
    console_output: bool = True,
    stream: Optional[TextIO] = None,
) -> logging.Logger:
    """
    Configure the package logger for the library and the experiment runner

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional path to log file
        console_output: Whether to output logs to the console
        stream: Console stream, stderr by default

    Returns:
        The configured ``steincc`` logger

    Raises:
        ValueError: If log_level is not a logging level
    """
    level = parse_level(log_level)
    handlers, errors = _build_handlers(level, log_file, console_output, stream)

    package_logger = logging.getLogger(PACKAGE_LOGGER)
    warnings_logger = logging.getLogger(WARNINGS_LOGGER)
    for logger in (package_logger, warnings_logger):
        logger.setLevel(level)
        for old in list(logger.handlers):
            logger.removeHandler(old)
            old.close()
        for handler in handlers:
            logger.addHandler(handler)
        logger.propagate = False
    logging.captureWarnings(True)

    for message in errors:
        package_logger.error(message)

    package_logger.debug("Logging initialized")
    return package_logger


def get_default_log_file() -> Path:
    """Get the default log file path"""
    return Path.home() / ".local" / "share" / "steincc" / "steincc.log"
