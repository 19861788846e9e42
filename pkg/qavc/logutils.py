"""Utilities for logging to a central log workspace."""

import logging
from typing import Any, Optional

from opencensus.ext.azure.log_exporter import AzureLogHandler

from qavc.settings import get_settings


class CustomDimensionsFilter(logging.Filter):
    """Add run-wide properties (seed, scenario, stage) to log records."""

    def __init__(self, custom_dimensions: Optional[dict] = None) -> None:
        """Initialize the filter with the given custom_dimensions."""
        super().__init__()
        self.custom_dimensions = custom_dimensions or {}

    def filter(self, record: logging.LogRecord) -> bool:
        """Adds the default custom_dimensions to the current log record."""
        custom_dimensions = self.custom_dimensions.copy()
        custom_dimensions.update(getattr(record, "custom_dimensions", {}))
        record.custom_dimensions = custom_dimensions  # type: ignore

        return True


def set_log_handler(
    name: str = "qavc", custom_dimensions: Optional[dict] = None
) -> Optional[logging.Handler]:
    """Adds an Azure log handler to the logger with provided name.

    The log data is sent to the Azure Application Insights instance associated
    with the connection string in settings. Additional properties are added to
    log messages in form of key-value pairs which can be used to filter the
    log messages, e.g. all records of one seeded run.

    Args:
        name: Name of the logger instance to which we add the log handler.
        custom_dimensions: Extra key-value pairs attached to every record.

    Returns:
        The handler that was added, or None if central logging is not configured.
    """
    logger = logging.getLogger(name)
    settings = get_settings()
    if not settings.central_logging_connection_string:
        return None

    dimensions = {"logger_name": "logger_qavc"}
    dimensions.update(custom_dimensions or {})
    handler = AzureLogHandler(
        connection_string=settings.central_logging_connection_string
    )
    handler.addFilter(CustomDimensionsFilter(dimensions))
    logger.addHandler(handler)
    return handler


def update_log_dimensions(name: str = "qavc", **dimensions: Any) -> int:
    """Set dimensions on every CustomDimensionsFilter of the named logger's handlers.

    Returns:
        The number of filters updated.
    """
    updated = 0
    for handler in logging.getLogger(name).handlers:
        for log_filter in handler.filters:
            if isinstance(log_filter, CustomDimensionsFilter):
                log_filter.custom_dimensions.update(dimensions)
                updated += 1
    return updated
