"""
Structured Logging
==================

Key/value structured logging for the compiler, driver and simulator.

Console output goes to stderr so that command output on stdout stays
machine-parsable. A rotating log file is kept under the application home
directory when it is writable.
"""

import logging
import logging.handlers
import os
import sys
from pathlib import Path
from typing import Any, Optional

import structlog

_CONFIGURED = False


def _configure_structlog() -> None:
    global _CONFIGURED
    if _CONFIGURED:
        return
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.format_exc_info,
            structlog.processors.KeyValueRenderer(
                key_order=["timestamp", "level", "logger", "event"]
            ),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _CONFIGURED = True


def default_home() -> Path:
    """Application home directory (``PULSESTACK_HOME`` or ``~/.pulsestack``)."""
    env = os.environ.get("PULSESTACK_HOME")
    return Path(env) if env else Path.home() / ".pulsestack"


class StructuredLogger:
    """Structured logger with an audit channel."""

    def __init__(self, name: str, log_dir: Optional[Path] = None, level: str = "WARNING"):
        self.name = name
        self.log_dir = log_dir or default_home() / "logs"

        _configure_structlog()
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        # Prevent duplicate handlers
        if not self.logger.handlers:
            self._setup_handlers(level)

        self._log = structlog.get_logger(name)

    def _setup_handlers(self, level: str):
        formatter = logging.Formatter("%(message)s")

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(getattr(logging, level.upper(), logging.WARNING))
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        try:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                self.log_dir / f"{self.name}.log",
                maxBytes=10 * 1024 * 1024,  # 10MB
                backupCount=5,
                encoding="utf-8",
            )
        except OSError:
            # Read-only home; console only
            return
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        self.logger.addHandler(file_handler)

    def set_level(self, level: str):
        """Change the console level (file handler always records DEBUG)."""
        value = getattr(logging, level.upper(), None)
        if not isinstance(value, int):
            raise ValueError(f"Unknown log level: {level}")
        for handler in self.logger.handlers:
            if not isinstance(handler, logging.handlers.RotatingFileHandler):
                handler.setLevel(value)

    def debug(self, message: str, **kwargs: Any):
        self._log.debug(message, **kwargs)

    def info(self, message: str, **kwargs: Any):
        self._log.info(message, **kwargs)

    def warning(self, message: str, **kwargs: Any):
        self._log.warning(message, **kwargs)

    def error(self, message: str, exception: Optional[BaseException] = None, **kwargs: Any):
        """Log error message."""
        if exception is not None:
            kwargs["error"] = str(exception)
            kwargs["error_type"] = type(exception).__name__
        self._log.error(message, **kwargs)

    def critical(self, message: str, exception: Optional[BaseException] = None, **kwargs: Any):
        if exception is not None:
            self._log.critical(message, exc_info=exception, **kwargs)
        else:
            self._log.critical(message, **kwargs)

    def audit(self, action: str, user: str = "system", **kwargs: Any):
        """Log audit events."""
        self._log.info("audit", action=action, user=user, **kwargs)


# Global logger instance
logger = StructuredLogger("pulsestack")
