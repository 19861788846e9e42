"""Tests for the central logging helpers."""

import logging

import pytest
from pytest_mock import MockerFixture

from qavc.logutils import (
    CustomDimensionsFilter,
    set_log_handler,
    update_log_dimensions,
)
from qavc.settings import get_settings


def test_no_handler_without_connection_string(monkeypatch: pytest.MonkeyPatch) -> None:
    """Central logging stays off unless configured."""
    monkeypatch.delenv("CENTRAL_LOGGING_CONNECTION_STRING", raising=False)
    get_settings.cache_clear()
    assert set_log_handler() is None


def test_handler_is_added(
    monkeypatch: pytest.MonkeyPatch, mocker: MockerFixture
) -> None:
    """The Azure handler gets the connection string and a dimensions filter."""
    monkeypatch.setenv("CENTRAL_LOGGING_CONNECTION_STRING", "InstrumentationKey=1234")
    get_settings.cache_clear()
    mock_handler = mocker.patch("qavc.logutils.AzureLogHandler")

    handler = set_log_handler("qavc.test", {"seed": 7})

    mock_handler.assert_called_once_with(connection_string="InstrumentationKey=1234")
    assert handler is mock_handler.return_value
    dimensions_filter = handler.addFilter.call_args[0][0]
    assert dimensions_filter.custom_dimensions == {
        "logger_name": "logger_qavc",
        "seed": 7,
    }
    logging.getLogger("qavc.test").removeHandler(handler)


def test_custom_dimensions_filter() -> None:
    """Record dimensions are merged over the defaults."""
    dimensions_filter = CustomDimensionsFilter({"seed": 1, "stage": "net"})
    record = logging.LogRecord("qavc", logging.INFO, __file__, 1, "msg", None, None)
    record.custom_dimensions = {"stage": "telescope"}  # type: ignore
    assert dimensions_filter.filter(record)
    assert record.custom_dimensions == {"seed": 1, "stage": "telescope"}  # type: ignore


def test_update_log_dimensions() -> None:
    """Only dimension filters on the named logger's handlers are updated."""
    handler = logging.NullHandler()
    dimensions_filter = CustomDimensionsFilter({"seed": 1})
    handler.addFilter(dimensions_filter)
    handler.addFilter(logging.Filter("qavc"))
    logger = logging.getLogger("qavc.dimensions")
    logger.addHandler(handler)
    try:
        updated = update_log_dimensions("qavc.dimensions", stage="net", seed=2)
    finally:
        logger.removeHandler(handler)
    assert updated == 1
    assert dimensions_filter.custom_dimensions == {"seed": 2, "stage": "net"}
    assert update_log_dimensions("qavc.nobody", stage="net") == 0
