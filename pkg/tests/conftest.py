"""Shared fixtures for the laboratory tests."""

from typing import Generator

import numpy as np
import pytest

from qavc.core import channel as ch
from qavc.core.channel import Channel
from qavc.settings import get_settings


@pytest.fixture(autouse=True)
def clear_settings_cache() -> Generator[None, None, None]:
    """Let tests that patch environment variables see fresh Settings."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    """A fixed-seed generator so failures reproduce."""
    return np.random.default_rng(20240531)


@pytest.fixture
def bitflip() -> Channel:
    """CNOT from the jammer qubit onto the sender qubit, jammer discarded."""
    return ch.bitflip_jammer()


@pytest.fixture
def ignoring() -> Channel:
    """Identity on the sender qubit, jammer discarded."""
    return ch.jammer_ignoring()
