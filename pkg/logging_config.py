"""Logging configuration for the laboratory runs."""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional, Union

# Default output directory; the CLI points this at --out
OUTPUT_DIR = Path.cwd() / "results"

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_MAX_BYTES = 10 * 1024 * 1024  # 10MB


def setup_logging(
    output_dir: Optional[Union[str, Path]] = None, level: int = logging.INFO
) -> logging.Logger:
    """Set up console and rotating file logging under ``<output_dir>/logs``."""
    global OUTPUT_DIR
    if output_dir is not None:
        OUTPUT_DIR = Path(output_dir)
    logs_dir = OUTPUT_DIR / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)

    detailed_formatter = logging.Formatter(LOG_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    # Repeated CLI invocations in one process must not stack handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, "_nodallab", False):
            root_logger.removeHandler(handler)
            handler.close()

    # Experiment logs
    experiment_handler = logging.handlers.RotatingFileHandler(
        logs_dir / "experiments.log", maxBytes=_MAX_BYTES, backupCount=5
    )
    experiment_handler.setFormatter(detailed_formatter)
    experiment_handler.setLevel(level)

    # Error logs
    error_handler = logging.handlers.RotatingFileHandler(
        logs_dir / "errors.log", maxBytes=_MAX_BYTES, backupCount=5
    )
    error_handler.setFormatter(detailed_formatter)
    error_handler.setLevel(logging.ERROR)

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setFormatter(detailed_formatter)
    console_handler.setLevel(logging.WARNING)

    for handler in (experiment_handler, error_handler, console_handler):
        handler._nodallab = True
        root_logger.addHandler(handler)

    return root_logger


def get_state_file_path(filename: str) -> Path:
    """Get the full path for a report or state file in the output directory."""
    OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
    return OUTPUT_DIR / filename
