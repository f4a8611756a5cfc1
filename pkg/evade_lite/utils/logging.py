"""
Structured logging configuration for evade-lite.

All log output goes to stderr; stdout is reserved for CLI output and for the
subprocess model protocol.
"""

import logging
import logging.handlers
from pathlib import Path
from typing import Any, Dict, Optional

import structlog
from rich.console import Console
from rich.logging import RichHandler

from .config import get_settings


def setup_logging(level: Optional[str] = None) -> None:
    """Configure structured logging for the application."""
    settings = get_settings()
    log_level = getattr(logging, (level or settings.logging.level).upper())

    handlers = []

    console = Console(stderr=True)
    rich_handler = RichHandler(
        console=console,
        show_time=True,
        show_path=False,
        rich_tracebacks=True,
    )
    rich_handler.setLevel(log_level)
    handlers.append(rich_handler)

    if settings.logging.file:
        file_path = Path(settings.logging.file)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.handlers.RotatingFileHandler(
            filename=file_path,
            maxBytes=settings.logging.max_file_size,
            backupCount=settings.logging.backup_count,
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(settings.logging.format))
        handlers.append(file_handler)

    logging.basicConfig(
        level=log_level,
        handlers=handlers,
        format=settings.logging.format,
        force=True,
    )

    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("uvicorn.access").setLevel(logging.WARNING)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(fmt="ISO"),
            (
                structlog.dev.ConsoleRenderer()
                if settings.debug
                else structlog.processors.JSONRenderer()
            ),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(log_level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str) -> Any:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


class PerformanceLogger:
    """Performance logger for pipeline stages."""

    def __init__(self, name: str):
        self.logger = get_logger(f"performance.{name}")

    def log_operation_time(
        self, operation: str, duration: float, details: Optional[Dict[str, Any]] = None
    ):
        """Log operation execution time."""
        self.logger.info(
            "Operation completed",
            operation=operation,
            duration_seconds=round(duration, 6),
            details=details or {},
            event_type="performance",
        )


class CampaignLogger:
    """Logger for attack campaign outcomes."""

    def __init__(self, name: str):
        self.logger = get_logger(f"campaign.{name}")

    def log_attack(
        self,
        sample_index: int,
        c_from: int,
        c_to: Optional[int],
        success: bool,
        distance: float,
        queries: int,
    ):
        """Log a single attack outcome."""
        self.logger.debug(
            "Attack finished",
            sample_index=sample_index,
            c_from=c_from,
            c_to=c_to,
            success=success,
            distance=distance,
            queries=queries,
            event_type="attack",
        )

    def log_stratum(self, epsilon: float, target: Optional[int], evaded: int, total: int):
        """Log a finished sweep stratum."""
        self.logger.info(
            "Stratum finished",
            epsilon=epsilon,
            target_class=target,
            evaded=evaded,
            total=total,
            event_type="stratum",
        )
