"""Tests for the built-in verification suites."""

from pathlib import Path
from typing import Callable

import pytest
from pytest_mock import MockerFixture

from qavc.runner import pipeline, verify
from qavc.runner.models import Check, ExperimentConfig


def _by_name(checks: list) -> dict:
    return {check.name: check for check in checks}


def test_run_suite_all_runs_every_suite_in_order(mocker: MockerFixture) -> None:
    """The "all" suite runs every suite in a fixed order with derived seeds."""
    calls = []

    def _fake(name: str) -> Callable[[int], list]:
        def _suite(seed: int) -> list:
            calls.append((name, seed))
            return [Check.leq(name, "fine", 0.0, 1.0, 0.0)]

        return _suite

    mocker.patch.dict(verify.SUITES, {name: _fake(name) for name in verify.SUITES})
    checks = verify.run_suite("all", 9)
    assert [name for name, _ in calls] == ["symmetry", "derand", "capacity", "approx"]
    assert [seed for _, seed in calls] == [verify.derive_seed(9, i) for i in range(4)]
    assert len(checks) == 4


@pytest.mark.slow
def test_symmetry_suite() -> None:
    """Covariance over 50 states per block length and both penalty bounds."""
    checks = verify.symmetry_suite(0)
    assert all(check.ok for check in checks)
    named = _by_name(checks)
    assert "covariance l=3, 50 zeta" in named
    assert "de Finetti penalty, classical, 100 zeta" in named
    assert "de Finetti penalty, quantum, 50 zeta" in named
    assert named["penalty factor l=2"].lhs == 81
    assert named["penalty factor l=3"].lhs == 256


@pytest.mark.slow
def test_derand_suite() -> None:
    """1000 Monte Carlo trials and derandomization of a quantum code."""
    checks = verify.derand_suite(0)
    assert all(check.ok for check in checks)
    named = _by_name(checks)
    assert "empirical failure rate, 1000 trials" in named
    quantum = named["reduced worst-case error, identity code"]
    assert quantum.rhs == pytest.approx(0.3775, abs=1e-9)
    assert "reduced worst-case error, pair parity" in named


@pytest.mark.slow
def test_verify_all_is_reproducible(tmp_path: Path) -> None:
    """Two runs of every suite with one seed write identical records."""
    config = ExperimentConfig(
        scenario="bitflip-jammer",
        pipeline=["verify"],
        params={"verify": {"suite": "all"}},
        seed=21,
    )
    first = pipeline.run_config(config, tmp_path / "first")
    second = pipeline.run_config(config, tmp_path / "second")
    assert first.status == second.status == "ok"
    first_bytes = (tmp_path / "first" / "record.json").read_bytes()
    assert first_bytes == (tmp_path / "second" / "record.json").read_bytes()
