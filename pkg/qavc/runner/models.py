"""Experiment configs, per-stage parameters and run records."""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type

from pydantic import BaseModel, Field, field_validator, model_validator

from qavc.core.channel import Channel

Stage = Literal["symmetrize", "derandomize", "capacity", "net", "telescope", "verify"]
Suite = Literal["symmetry", "derand", "capacity", "approx", "all"]


class SymmetrizeParams(BaseModel):
    """Symmetrize the scenario's code and check the symmetry identities."""

    ell: Optional[int] = None
    trials: int = Field(default=20, ge=1)  # random jammer states per identity
    grid_points: int = Field(default=200, ge=1)  # compound-error search
    # permutations to draw when ell! is too big
    sample: Optional[int] = Field(default=None, ge=1)


class DerandomizeParams(BaseModel):
    """Shrink the symmetrized code to a few variants."""

    delta: float = Field(default=0.1, gt=0, lt=1)
    ell: Optional[int] = None
    n: Optional[int] = Field(default=None, ge=1)
    trials: int = Field(default=1000, ge=1)  # Monte Carlo failure-rate trials


class CapacityParams(BaseModel):
    """Finite-block capacity estimates."""

    ell: int = Field(default=1, ge=1)
    kind: Literal["classical", "quantum", "both"] = "classical"
    restarts: int = Field(default=3, ge=1)
    grid_points: int = Field(default=200, ge=1)
    exchange_iters: int = Field(default=8, ge=1)


class NetParams(BaseModel):
    """Build a state net and compare block errors over it."""

    eta: float = Field(default=0.1, gt=0)
    ell: int = Field(default=2, ge=1)
    trials: int = Field(default=200, ge=1)
    pool_size: int = Field(default=400, ge=1)
    validation_size: int = Field(default=1000, ge=1)


class TelescopeParams(BaseModel):
    """Approximate a block jammer state letter by letter."""

    eta: float = Field(default=0.1, gt=0)
    ell: int = Field(default=2, ge=1)
    jammer: Literal["ghz", "correlated", "mixed", "basis"] = "correlated"


class VerifyParams(BaseModel):
    """Run a verification suite inside a pipeline."""

    suite: Suite = "all"


STAGE_PARAMS: Dict[str, Type[BaseModel]] = {
    "symmetrize": SymmetrizeParams,
    "derandomize": DerandomizeParams,
    "capacity": CapacityParams,
    "net": NetParams,
    "telescope": TelescopeParams,
    "verify": VerifyParams,
}


class ExperimentConfig(BaseModel):
    """What to run, on which channel, with which seed."""

    scenario: Optional[str] = None
    channel: Optional[Channel] = None
    channel_file: Optional[Path] = None
    pipeline: List[Stage] = []
    params: Dict[str, Dict[str, Any]] = {}
    seed: int = Field(ge=0, lt=2**64)
    out_dir: Optional[Path] = None

    @model_validator(mode="after")
    def check_config(self) -> "ExperimentConfig":
        """Exactly one channel source; params only for stages in the pipeline."""
        sources = [self.scenario, self.channel, self.channel_file]
        if sum(s is not None for s in sources) != 1:
            raise ValueError("give exactly one of scenario, channel or channel_file")
        for stage, values in self.params.items():
            if stage not in self.pipeline:
                raise ValueError(
                    f"params given for {stage!r}, which is not in the pipeline"
                )
            STAGE_PARAMS[stage].model_validate(values)
        return self

    def stage_params(self, stage: str) -> BaseModel:
        """Validated parameters of a stage, defaults filled in."""
        return STAGE_PARAMS[stage].model_validate(self.params.get(stage, {}))


class Check(BaseModel):
    """One verified relation lhs <= rhs (or lhs == rhs within tolerance)."""

    suite: str
    name: str
    lhs: float
    rhs: float
    relation: Literal["<=", "=="]
    tolerance: float
    ok: bool

    @classmethod
    def leq(
        cls, suite: str, name: str, lhs: float, rhs: float, tolerance: float
    ) -> "Check":
        """lhs <= rhs + tolerance."""
        return cls(
            suite=suite,
            name=name,
            lhs=lhs,
            rhs=rhs,
            relation="<=",
            tolerance=tolerance,
            ok=bool(lhs <= rhs + tolerance),
        )

    @classmethod
    def close(
        cls, suite: str, name: str, lhs: float, rhs: float, tolerance: float
    ) -> "Check":
        """|lhs - rhs| <= tolerance."""
        return cls(
            suite=suite,
            name=name,
            lhs=lhs,
            rhs=rhs,
            relation="==",
            tolerance=tolerance,
            ok=bool(abs(lhs - rhs) <= tolerance),
        )


class StageRecord(BaseModel):
    """Results of one stage with the unit of every numeric field."""

    name: str
    index: int
    seed: int
    result: Dict[str, Any] = {}
    units: Dict[str, str] = {}
    checks: List[Check] = []
    notes: List[str] = []


class Failure(BaseModel):
    """Marker left in a partial record when a stage aborts."""

    stage: str
    index: int
    error: str
    message: str
    exit_code: int


class RunRecord(BaseModel):
    """Everything a run produced except wall-clock times."""

    version: str
    config: Dict[str, Any]
    scenario: str
    stages: List[StageRecord] = []
    status: Literal["ok", "failed", "running"] = "running"
    failure: Optional[Failure] = None

    @field_validator("config")
    @classmethod
    def drop_paths(cls, config: Dict[str, Any]) -> Dict[str, Any]:
        """The output directory does not change results, so it is left out."""
        return {k: v for k, v in config.items() if k != "out_dir"}
