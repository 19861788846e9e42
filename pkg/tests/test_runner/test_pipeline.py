"""Tests for running experiment configs and writing their records."""

import json
import logging
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError
from pytest_mock import MockerFixture

from qavc.core.errors import VerificationError
from qavc.logutils import CustomDimensionsFilter
from qavc.runner import pipeline
from qavc.runner.models import Check, ExperimentConfig, RunRecord, StageRecord

# pylint: disable=redefined-outer-name

CONFIGS = Path(__file__).parents[2] / "configs"
OUTPUTS = ["record.json", "timing.json", "summary.csv", "checks.csv", "report.md"]

SMALL_SYMMETRIZE = {"ell": 2, "trials": 3, "grid_points": 20}


def _read_record(out_dir: Path) -> dict:
    return json.loads((out_dir / "record.json").read_text(encoding="utf-8"))


def test_empty_pipeline(tmp_path: Path) -> None:
    """A config without stages still echoes itself and writes every output."""
    config = ExperimentConfig(scenario="bitflip-jammer", seed=5)
    record = pipeline.run_config(config, tmp_path)
    assert record.status == "ok"
    assert record.stages == []
    for name in OUTPUTS:
        assert (tmp_path / name).exists()
    data = _read_record(tmp_path)
    assert data["config"]["seed"] == 5
    assert data["scenario"] == "bitflip-jammer"
    assert "out_dir" not in data["config"]


def test_symmetrize_stage(tmp_path: Path) -> None:
    """Covariance identities and the penalty check all pass on the bit-flip jammer."""
    config = ExperimentConfig(
        scenario="bitflip-jammer",
        pipeline=["symmetrize"],
        params={"symmetrize": SMALL_SYMMETRIZE},
        seed=11,
    )
    record = pipeline.run_config(config, tmp_path)
    stage = record.stages[0]
    assert stage.name == "symmetrize"
    assert stage.index == 0
    assert len(stage.checks) == 4
    assert all(check.ok for check in stage.checks)
    assert stage.result["variants"] == 2
    assert stage.result["penalty_factor"] == 81
    assert set(stage.result) <= set(stage.units) | {"sampled"}
    checks = pd.read_csv(tmp_path / "checks.csv")
    assert len(checks) == 4
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["stage"]) == ["symmetrize"]


def test_record_is_byte_identical_across_runs(tmp_path: Path) -> None:
    """Same config and seed give the same record.json; only timing.json differs."""
    config = ExperimentConfig(
        scenario="bitflip-jammer",
        pipeline=["symmetrize"],
        params={"symmetrize": SMALL_SYMMETRIZE},
        seed=3,
    )
    pipeline.run_config(config, tmp_path / "first")
    pipeline.run_config(config, tmp_path / "second")
    first = (tmp_path / "first" / "record.json").read_bytes()
    second = (tmp_path / "second" / "record.json").read_bytes()
    assert first == second


def test_stage_seeds_follow_the_root_seed(tmp_path: Path) -> None:
    """Stage i gets derive_seed(seed, i)."""
    config = ExperimentConfig(
        scenario="jammer-ignoring",
        pipeline=["symmetrize"],
        params={"symmetrize": SMALL_SYMMETRIZE},
        seed=8,
    )
    record = pipeline.run_config(config, tmp_path)
    assert record.stages[0].seed == pipeline.derive_seed(8, 0)


def test_invalid_channel_file(tmp_path: Path) -> None:
    """A non-trace-preserving channel fails validation and leaves a failure record."""
    bad = {
        "in_dims": [2, 1],
        "out_dims": [2],
        "kraus": [[[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]],
    }
    (tmp_path / "bad.json").write_text(json.dumps(bad), encoding="utf-8")
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps({"channel_file": "bad.json", "pipeline": [], "seed": 1}),
        encoding="utf-8",
    )
    out_dir = tmp_path / "out"
    with pytest.raises(ValidationError):
        pipeline.run(config_path, out=out_dir)
    data = _read_record(out_dir)
    assert data["status"] == "failed"
    assert data["failure"]["stage"] == "setup"
    assert data["failure"]["index"] == -1
    assert data["failure"]["exit_code"] == 2


def test_load_config(tmp_path: Path) -> None:
    """Relative channel files resolve next to the config; --seed overrides."""
    sub = tmp_path / "sub"
    sub.mkdir()
    path = sub / "config.json"
    path.write_text(
        json.dumps({"channel_file": "ch.json", "seed": 1}), encoding="utf-8"
    )
    config = pipeline.load_config(path, seed=99)
    assert config.seed == 99
    assert config.channel_file == sub / "ch.json"


def test_inline_channel_config(tmp_path: Path) -> None:
    """The example channel file is the bit-flip jammer in pair form."""
    record = pipeline.run(CONFIGS / "inline-channel.json", out=tmp_path)
    assert record.scenario == "inline"
    assert record.status == "ok"


def test_failed_checks_raise_after_recording(
    tmp_path: Path, mocker: MockerFixture
) -> None:
    """A failing check aborts the run with exit code 3 and a partial record."""
    broken = Check.leq("symmetry", "made up", 2.0, 1.0, 0.0)
    mocker.patch("qavc.runner.pipeline.verify.run_suite", return_value=[broken])
    config = ExperimentConfig(scenario="bitflip-jammer", pipeline=["verify"], seed=0)
    with pytest.raises(VerificationError) as excinfo:
        pipeline.run_config(config, tmp_path)
    assert excinfo.value.exit_code == 3
    data = _read_record(tmp_path)
    assert data["status"] == "failed"
    assert data["failure"]["stage"] == "verify"
    assert data["stages"][0]["checks"][0]["ok"] is False
    assert "FAILED made up" in (tmp_path / "report.md").read_text(encoding="utf-8")


def test_report_clamps_probabilities_only() -> None:
    """Round-off below zero is shown as 0 for probabilities, left alone elsewhere."""
    record = RunRecord(
        version="0.1.0",
        config={"seed": 1, "pipeline": ["symmetrize"]},
        scenario="bitflip-jammer",
        status="ok",
        stages=[
            StageRecord(
                name="symmetrize",
                index=0,
                seed=1,
                result={"p": -1e-12, "x": -0.5},
                units={"p": "probability", "x": "dimensionless"},
            )
        ],
    )
    report = pipeline.render_report(record)
    assert "| p | 0.0 | probability |" in report
    assert "| x | -0.5 | dimensionless |" in report
    assert "**ok**" in report
    # the record itself keeps the raw value
    raw = json.loads(pipeline.record_json(record))
    assert raw["stages"][0]["result"]["p"] == -1e-12


def test_capacity_stage(tmp_path: Path) -> None:
    """The identity qubit gives one bit per use at l = 1."""
    config = ExperimentConfig(
        scenario="jammer-ignoring",
        pipeline=["capacity"],
        params={"capacity": {"restarts": 1, "grid_points": 20, "exchange_iters": 1}},
        seed=0,
    )
    record = pipeline.run_config(config, tmp_path)
    result = record.stages[0].result
    assert result["c_rand"] == pytest.approx(1.0, abs=1e-6)
    assert "classical_oracle" not in result


@pytest.mark.slow
def test_bitflip_derandomization_end_to_end(tmp_path: Path) -> None:
    """The bundled example: symmetrize then derandomize the pair-parity code."""
    record = pipeline.run(CONFIGS / "bitflip-derand.json", out=tmp_path)
    assert record.status == "ok"
    derandomize = record.stages[1].result
    assert derandomize["n"] == 87
    assert derandomize["reduced_worst_case"] <= derandomize["target"] + 1e-9
    assert pipeline.DICHOTOMY_NOTE not in record.stages[1].notes


@pytest.mark.slow
def test_bsc_capacity_end_to_end(tmp_path: Path) -> None:
    """Capacity against the oracle, then nets and telescoping on the BSC family."""
    record = pipeline.run(CONFIGS / "bsc-capacity.json", out=tmp_path)
    assert record.status == "ok"
    assert [s.name for s in record.stages] == ["capacity", "net", "telescope"]
    assert record.stages[0].result["classical_oracle"] == pytest.approx(
        0.278072, abs=1e-6
    )
    telescope = record.stages[2].result
    upper_within = telescope["measured_upper"] <= telescope["total_bound"] + 1e-6
    assert telescope["certified"] == upper_within
    assert telescope["measured_lower"] <= telescope["total_bound"] + 1e-6


@pytest.mark.parametrize(
    "error, code",
    [
        (np.linalg.LinAlgError("eigenvalues did not converge"), 2),
        (OSError("disk gone"), 2),
        (RuntimeError("worker died"), 1),
    ],
)
def test_unexpected_errors_still_leave_a_record(
    error: Exception, code: int, tmp_path: Path, mocker: MockerFixture
) -> None:
    """Numerical and I/O errors inside a stage are re-raised after recording."""
    mocker.patch("qavc.runner.pipeline.verify.run_suite", side_effect=error)
    config = ExperimentConfig(scenario="bitflip-jammer", pipeline=["verify"], seed=0)
    with pytest.raises(type(error)):
        pipeline.run_config(config, tmp_path)
    data = _read_record(tmp_path)
    assert data["status"] == "failed"
    assert data["failure"]["stage"] == "verify"
    assert data["failure"]["error"] == type(error).__name__
    assert data["failure"]["exit_code"] == code
    assert (tmp_path / "report.md").exists()


class _Collecting(logging.Handler):
    def __init__(self) -> None:
        super().__init__(logging.INFO)
        self.records: List[logging.LogRecord] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.records.append(record)


def test_log_records_carry_run_dimensions(
    tmp_path: Path, caplog: pytest.LogCaptureFixture
) -> None:
    """Central log records are tagged with the seed, scenario and current stage."""
    handler = _Collecting()
    handler.addFilter(CustomDimensionsFilter({"logger_name": "logger_qavc"}))
    logger = logging.getLogger("qavc")
    logger.addHandler(handler)
    config = ExperimentConfig(
        scenario="bitflip-jammer",
        pipeline=["symmetrize"],
        params={"symmetrize": SMALL_SYMMETRIZE},
        seed=12,
    )
    try:
        with caplog.at_level(logging.INFO, logger="qavc"):
            pipeline.run_config(config, tmp_path)
    finally:
        logger.removeHandler(handler)
    started = [r for r in handler.records if r.getMessage().startswith("stage 0")]
    assert len(started) == 1
    assert started[0].custom_dimensions == {  # type: ignore
        "logger_name": "logger_qavc",
        "seed": 12,
        "scenario": "bitflip-jammer",
        "stage": "symmetrize",
        "stage_seed": pipeline.derive_seed(12, 0),
    }


def test_quantum_scenario_derandomizes(tmp_path: Path) -> None:
    """The identity quantum code goes through symmetrize and derandomize."""
    config = ExperimentConfig(
        scenario="depolarizing-quantum",
        pipeline=["symmetrize", "derandomize"],
        params={
            "symmetrize": SMALL_SYMMETRIZE,
            "derandomize": {"delta": 0.1, "trials": 100},
        },
        seed=5,
    )
    record = pipeline.run_config(config, tmp_path)
    assert record.status == "ok"
    symmetrize, derandomize = (stage.result for stage in record.stages)
    assert symmetrize["penalty_factor"] == 81
    assert derandomize["epsilon"] == pytest.approx(0.2775, abs=1e-9)
    assert derandomize["n"] == 60
    assert derandomize["reduced_worst_case"] <= derandomize["target"] + 1e-9


@pytest.mark.slow
def test_quantum_example_config(tmp_path: Path) -> None:
    """The bundled quantum example runs with 1000 Monte Carlo trials."""
    record = pipeline.run(CONFIGS / "depolarizing-quantum.json", out=tmp_path)
    assert record.status == "ok"
    assert record.config["params"]["derandomize"]["trials"] == 1000
