import logging
from pathlib import Path

import pytest

from qavc.settings import Settings, get_settings

# pylint: disable=unexpected-keyword-arg


def test_settings() -> None:
    """Only laboratory settings are declared."""
    assert "testing" not in Settings.model_fields
    assert get_settings().max_enumerated_block >= 1


def test_minimal_settings(monkeypatch: pytest.MonkeyPatch) -> None:
    """Check the defaults when nothing is configured."""
    for key in ("MAX_MATRIX_ENTRIES", "MAX_ENUMERATED_BLOCK", "OUT_DIR", "LOG_LEVEL"):
        monkeypatch.delenv(key, raising=False)
    settings = Settings(  # type: ignore
        # To stop any local .env files influencing the test
        _env_file=None,
    )

    assert settings.log_level == logging.getLevelName(logging.WARNING)
    assert settings.central_logging_connection_string is None
    assert settings.max_matrix_entries == 2**20
    assert settings.max_enumerated_block == 6
    assert settings.out_dir == Path("runs")


def test_maximal_settings() -> None:
    """Check that we can make a new Settings with all known values."""
    settings = Settings(  # type: ignore
        log_level=logging.getLevelName(logging.INFO),
        central_logging_connection_string="InstrumentationKey=00000000",
        max_matrix_entries=4096,
        max_enumerated_block=4,
        max_net_tuples=100,
        diamond_restarts=5,
        diamond_max_iter=50,
        diamond_tol=1e-8,
        derand_max_attempts=10,
        workers=4,
        out_dir=Path("elsewhere"),
        # To stop any local .env files influencing the test
        _env_file=None,
    )

    assert settings.workers == 4
    assert settings.out_dir == Path("elsewhere")


def test_settings_raises() -> None:
    """Check that invalid log levels and non-positive caps are refused."""
    with pytest.raises(ValueError):
        Settings(log_level="LOUD", _env_file=None)  # type: ignore
    with pytest.raises(ValueError):
        Settings(max_enumerated_block=0, _env_file=None)  # type: ignore
    with pytest.raises(ValueError):
        Settings(workers=-1, _env_file=None)  # type: ignore


def test_settings_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """Environment variables override the defaults."""
    monkeypatch.setenv("MAX_NET_TUPLES", "12")
    get_settings.cache_clear()
    assert get_settings().max_net_tuples == 12
