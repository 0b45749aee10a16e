"""Logger configuration for the application."""

import sys
from pathlib import Path
from typing import Any, Optional, Union

from loguru import logger

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}"


def setup_logger(level: str = "INFO", log_dir: Optional[Union[str, Path]] = None) -> Any:
    """Set up logger configuration.

    Args:
        level: Minimum level for the console sink
        log_dir: Directory for rotating file sinks; no file logging when empty

    Returns:
        Configured logger instance
    """
    # Remove default handler
    logger.remove()

    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=level.upper(), colorize=True)

    if log_dir:
        log_path = Path(log_dir)
        logger.add(
            log_path / "maskmend_{time}.log",
            rotation="1 day",
            retention="7 days",
            level="DEBUG",
            format=FILE_FORMAT,
            encoding="utf-8",
        )

        # Separate error log with full diagnostics
        logger.add(
            log_path / "errors_{time}.log",
            rotation="1 week",
            retention="1 month",
            level="ERROR",
            format=FILE_FORMAT,
            encoding="utf-8",
            backtrace=True,
            diagnose=True,
        )

    return logger


# Configure console logging on import
setup_logger()
