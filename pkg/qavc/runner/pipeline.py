"""Run an experiment config stage by stage and persist what it produced.

Every stage gets its own seed, derived from the root seed and its index, and
returns a StageRecord. A stage whose checks fail raises VerificationError
after its record has been kept, so the partial record on disk shows which
checks broke. Wall-clock times go to timing.json only, which keeps
record.json byte-identical across reruns of the same config and seed.
"""

import json
import logging
import math
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

import pandas as pd
from jinja2 import Environment, PackageLoader
from pydantic import ValidationError

from qavc import constants as c
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.code import RandomCode
from qavc.core.errors import QavcError, VerificationError
from qavc.lab import approx, capacity, derand, symmetry
from qavc.logutils import update_log_dimensions
from qavc.runner import verify
from qavc.runner.models import (
    CapacityParams,
    Check,
    DerandomizeParams,
    ExperimentConfig,
    Failure,
    NetParams,
    RunRecord,
    StageRecord,
    SymmetrizeParams,
    TelescopeParams,
    VerifyParams,
)
from qavc.runner.scenarios import Scenario, get_scenario, inline_scenario
from qavc.settings import get_settings
from qavc.utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

DICHOTOMY_NOTE = (
    "The derandomized code keeps its error below 1/2 with log2(n) shared bits, "
    "so the deterministic capacity is either zero or the random-code capacity."
)

# Shared between stages of one run: the symmetrized code, the derandomized one.
Context = Dict[str, Any]


def load_config(
    config_path: Union[str, Path], seed: Optional[int] = None
) -> ExperimentConfig:
    """Parse a JSON experiment config, optionally replacing its seed.

    A relative channel_file is resolved against the config's directory.

    Raises:
        ValidationError: If the config does not validate.
    """
    path = Path(config_path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if seed is not None:
        data["seed"] = seed
    config = ExperimentConfig.model_validate(data)
    if config.channel_file is not None and not config.channel_file.is_absolute():
        resolved = path.parent / config.channel_file
        config = config.model_copy(update={"channel_file": resolved})
    return config


def resolve_scenario(config: ExperimentConfig) -> Scenario:
    """The named scenario, or the inline or file channel wrapped as one.

    Raises:
        DomainError: If the scenario name is unknown.
        ValidationError: If the channel file is not a valid channel.
    """
    if config.scenario is not None:
        return get_scenario(config.scenario)
    if config.channel is not None:
        return inline_scenario(config.channel)
    assert config.channel_file is not None
    text = Path(config.channel_file).read_text(encoding="utf-8")
    return inline_scenario(Channel.model_validate_json(text))


def _symmetrize(
    scenario: Scenario, params: SymmetrizeParams, seed: int, ctx: Context
) -> StageRecord:
    n = scenario.channel
    ell = params.ell or scenario.ell
    code = scenario.code(ell)
    rc = symmetry.symmetrize(code, sample=params.sample, seed=seed)
    ctx["random_code"] = rc
    ctx["code"] = code

    record = StageRecord(name="symmetrize", index=0, seed=seed)
    jdim = n.in_dims[1]
    if rc.sampled:
        record.notes.append(
            "permutations were sampled; the covariance identity is not checked"
        )
    else:
        for trial in range(params.trials):
            zeta = qmath.random_density(jdim**ell, make_rng(seed, trial))
            lhs = cd.expected_error(rc, n, zeta)
            rhs = cd.error_value(code, n, symmetry.symmetrize_state(zeta, ell))
            record.checks.append(
                Check.close(
                    "symmetrize", f"covariance #{trial}", lhs, rhs, verify.EXACT_TOL
                )
            )

    compound = symmetry.compound_error(
        code, n, grid_points=params.grid_points, seed=derive_seed(seed, params.trials)
    )
    penalty = symmetry.verify_definetti_penalty(
        code, n, scenario.jammer_state(ell), compound.value
    )
    record.checks.append(
        Check.leq(
            "symmetrize",
            "de Finetti penalty",
            penalty.lhs,
            penalty.bound,
            verify.BOUND_TOL,
        )
    )
    record.result = {
        "ell": ell,
        "variants": len(rc.variants),
        "sampled": rc.sampled,
        "code_worst_case": cd.worst_case_error(RandomCode.deterministic(code), n).value,
        "symmetrized_worst_case": cd.worst_case_error(rc, n).value,
        "symmetrized_error_at_jammer": penalty.lhs,
        "compound_error": compound.value,
        "penalty_factor": penalty.factor,
        "penalty_bound": penalty.bound,
    }
    record.units = {
        "ell": c.UNIT_COUNT,
        "variants": c.UNIT_COUNT,
        "code_worst_case": c.UNIT_PROBABILITY,
        "symmetrized_worst_case": c.UNIT_PROBABILITY,
        "symmetrized_error_at_jammer": c.UNIT_PROBABILITY,
        "compound_error": c.UNIT_PROBABILITY,
        "penalty_factor": c.UNIT_RATIO,
        "penalty_bound": c.UNIT_PROBABILITY,
    }
    return record


def _derandomize(
    scenario: Scenario, params: DerandomizeParams, seed: int, ctx: Context
) -> StageRecord:
    n = scenario.channel
    rc = ctx.get("random_code")
    ell = params.ell or (rc.ell if rc is not None else scenario.ell)
    if rc is None or rc.ell != ell:
        rc = symmetry.symmetrize(scenario.code(ell))
    result = derand.derandomize(rc, n, params.delta, derive_seed(seed, 0), n=params.n)
    ctx["derandomized"] = result.reduced
    plan = result.plan
    reduced = cd.worst_case_error(result.reduced, n).value

    record = StageRecord(name="derandomize", index=0, seed=seed)
    record.checks.append(
        Check.leq(
            "derandomize",
            "reduced worst-case error",
            reduced,
            result.target,
            verify.BOUND_TOL,
        )
    )
    if plan.bit_bound is not None:
        record.checks.append(
            Check.leq(
                "derandomize", "shared bits", plan.shared_bits, plan.bit_bound + 1, 0.0
            )
        )
    rate = derand.empirical_failure_rate(
        rc,
        n,
        params.delta,
        plan.n,
        params.trials,
        derive_seed(seed, 1),
        epsilon=plan.epsilon,
    )
    bound = min(plan.tail_bound, 1.0)
    slack = 3 * derand.binomial_sigma(bound, params.trials)
    record.checks.append(
        Check.leq("derandomize", "empirical failure rate", rate, bound, slack)
    )
    if reduced < 0.5:
        record.notes.append(DICHOTOMY_NOTE)

    record.result = {
        "epsilon": plan.epsilon,
        "delta": plan.delta,
        "target": result.target,
        "n": plan.n,
        "n_pinsker": plan.n_pinsker,
        "n_exact": plan.n_exact,
        "relative_entropy": plan.relative_entropy,
        "tail_bound": plan.tail_bound,
        "shared_bits": plan.shared_bits,
        "bit_bound": plan.bit_bound,
        "attempts": result.attempts,
        "achieved": result.achieved,
        "reduced_worst_case": reduced,
        "failure_rate": rate,
        "chosen": result.chosen,
    }
    record.units = {
        "epsilon": c.UNIT_PROBABILITY,
        "delta": c.UNIT_PROBABILITY,
        "target": c.UNIT_PROBABILITY,
        "n": c.UNIT_COUNT,
        "n_pinsker": c.UNIT_COUNT,
        "n_exact": c.UNIT_COUNT,
        "relative_entropy": c.UNIT_NATS,
        "tail_bound": c.UNIT_PROBABILITY,
        "shared_bits": c.UNIT_BITS,
        "bit_bound": c.UNIT_BITS,
        "attempts": c.UNIT_COUNT,
        "achieved": c.UNIT_PROBABILITY,
        "reduced_worst_case": c.UNIT_PROBABILITY,
        "failure_rate": c.UNIT_PROBABILITY,
        "chosen": c.UNIT_COUNT,
    }
    return record


def _capacity(
    scenario: Scenario, params: CapacityParams, seed: int, ctx: Context
) -> StageRecord:
    # pylint: disable=unused-argument
    n = scenario.channel
    cfg = capacity.OptimizerConfig(
        restarts=params.restarts,
        grid_points=params.grid_points,
        exchange_iters=params.exchange_iters,
        seed=seed,
    )
    record = StageRecord(name="capacity", index=0, seed=seed)
    estimates = []
    if params.kind in ("classical", "both"):
        estimates.append(("c_rand", capacity.estimate_c_rand(n, params.ell, cfg)))
    if params.kind in ("quantum", "both"):
        estimates.append(("q_rand", capacity.estimate_q_rand(n, params.ell, cfg)))

    for key, estimate in estimates:
        record.result[key] = estimate.value_bits_per_use
        record.result[f"{key}_reported"] = estimate.reported_value
        record.result[f"{key}_grid_gap"] = estimate.grid_gap
        record.result[f"{key}_spread"] = estimate.spread
        record.units[key] = c.UNIT_BITS_PER_USE
        record.units[f"{key}_reported"] = c.UNIT_BITS_PER_USE
        record.units[f"{key}_grid_gap"] = c.UNIT_BITS
        record.units[f"{key}_spread"] = c.UNIT_BITS
        record.checks.append(
            Check.leq("capacity", f"{key} grid gap", estimate.grid_gap, 0.0, 1e-3)
        )
        if estimate.spread > 1e-3:
            record.notes.append(
                f"{key} restarts disagree by {estimate.spread:.3g} bits"
            )

    classical = dict(estimates).get("c_rand")
    if scenario.transition is not None and params.ell == 1 and classical is not None:
        oracle = capacity.classical_avc_oracle(scenario.transition)
        record.result["classical_oracle"] = oracle
        record.units["classical_oracle"] = c.UNIT_BITS_PER_USE
        record.checks.append(
            Check.close(
                "capacity",
                "c_rand vs classical oracle",
                classical.value_bits_per_use,
                oracle,
                2e-3,
            )
        )
    record.result["ell"] = params.ell
    record.units["ell"] = c.UNIT_COUNT
    return record


def _block_code(scenario: Scenario, ell: int, ctx: Context) -> RandomCode:
    """The most reduced code of block length ell the run has produced so far."""
    for key in ("derandomized", "random_code"):
        rc = ctx.get(key)
        if rc is not None and rc.ell == ell:
            return rc
    return RandomCode.deterministic(scenario.code(ell))


def _net(scenario: Scenario, params: NetParams, seed: int, ctx: Context) -> StageRecord:
    family = scenario.family()
    net = approx.build_state_net(
        family,
        params.eta,
        seed=derive_seed(seed, 0),
        pool_size=params.pool_size,
        validation_size=params.validation_size,
    )
    record = StageRecord(name="net", index=0, seed=seed)
    record.checks.append(
        Check.leq("net", "covering radius", net.radius, params.eta, approx.COVER_TOL)
    )
    record.checks.append(
        Check.leq("net", "log10 net size", math.log10(net.size), net.log10_bound, 0.0)
    )
    rc = _block_code(scenario, params.ell, ctx)
    gap = approx.lifted_net_gap(
        net,
        rc,
        family.base,
        params.ell,
        params.trials,
        seed=derive_seed(seed, 1),
        family_states=family.classical_states,
    )
    record.checks.append(
        Check.leq(
            "net",
            "lifted net gap",
            gap.sup_sampled,
            gap.sup_net + gap.slack,
            approx.COVER_TOL,
        )
    )
    if gap.net_sampled:
        record.notes.append("net tuples were sampled")
    record.result = {
        "eta": net.eta,
        "eta_tilde": net.eta_tilde,
        "size": net.size,
        "radius": net.radius,
        "validated_on": net.validated_on,
        "rounds": net.rounds,
        "log10_bound": net.log10_bound,
        "log10_lifted_bound": approx.lifted_cardinality_bound(
            family.adim, family.bdim, params.eta, params.ell
        ),
        "ell": params.ell,
        "sup_net": gap.sup_net,
        "sup_sampled": gap.sup_sampled,
        "slack": gap.slack,
    }
    record.units = {
        "eta": c.UNIT_HALF_DIAMOND,
        "eta_tilde": c.UNIT_HALF_DIAMOND,
        "size": c.UNIT_COUNT,
        "radius": c.UNIT_HALF_DIAMOND,
        "validated_on": c.UNIT_COUNT,
        "rounds": c.UNIT_COUNT,
        "log10_bound": c.UNIT_RATIO,
        "log10_lifted_bound": c.UNIT_RATIO,
        "ell": c.UNIT_COUNT,
        "sup_net": c.UNIT_PROBABILITY,
        "sup_sampled": c.UNIT_PROBABILITY,
        "slack": c.UNIT_PROBABILITY,
    }
    return record


def _telescope(
    scenario: Scenario, params: TelescopeParams, seed: int, ctx: Context
) -> StageRecord:
    # pylint: disable=unused-argument
    family = scenario.family()
    fine = approx.build_state_net(
        family, params.eta / params.ell, seed=derive_seed(seed, 0)
    )
    jammer = scenario.model_copy(update={"jammer_kind": params.jammer})
    sigma = jammer.jammer_state(params.ell)
    result = approx.telescope_approx(sigma, approx.NetProjectionStep(fine), params.ell)
    gap = approx.telescope_gap(family.base, sigma, result, seed=derive_seed(seed, 1))

    record = StageRecord(name="telescope", index=0, seed=seed)
    record.checks.append(
        Check.leq(
            "telescope",
            "telescoped distance",
            gap.measured.value,
            gap.bound,
            approx.COVER_TOL,
        )
    )
    if not gap.measured.converged:
        record.notes.append(
            f"diamond interval [{gap.measured.lower:.6g}, {gap.measured.upper:.6g}] "
            "did not close"
        )
    if not gap.certified:
        record.notes.append(
            f"upper end {gap.measured.upper:.6g} exceeds the summed bound "
            f"{gap.bound:.6g}; only the lower end is within it"
        )
    record.result = {
        "ell": params.ell,
        "step_bounds": result.step_bounds,
        "total_bound": result.total_bound,
        "measured_lower": gap.measured.lower,
        "measured_upper": gap.measured.upper,
        "certified": gap.certified,
        "net_size": fine.size,
    }
    record.units = {
        "ell": c.UNIT_COUNT,
        "step_bounds": c.UNIT_HALF_DIAMOND,
        "total_bound": c.UNIT_HALF_DIAMOND,
        "measured_lower": c.UNIT_HALF_DIAMOND,
        "measured_upper": c.UNIT_HALF_DIAMOND,
        "net_size": c.UNIT_COUNT,
    }
    return record


def _verify(
    scenario: Scenario, params: VerifyParams, seed: int, ctx: Context
) -> StageRecord:
    # pylint: disable=unused-argument
    checks = verify.run_suite(params.suite, seed)
    return StageRecord(
        name="verify",
        index=0,
        seed=seed,
        result={"suite": params.suite, "checks": len(checks)},
        units={"checks": c.UNIT_COUNT},
        checks=checks,
    )


STAGES: Dict[str, Callable[..., StageRecord]] = {
    "symmetrize": _symmetrize,
    "derandomize": _derandomize,
    "capacity": _capacity,
    "net": _net,
    "telescope": _telescope,
    "verify": _verify,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _exit_code(error: Exception) -> int:
    """The code main() exits with for this error."""
    if isinstance(error, QavcError):
        return error.exit_code
    if isinstance(error, (ValidationError, OSError, ValueError)):
        return c.EXIT_VALIDATION
    return c.EXIT_ERROR


def run_config(config: ExperimentConfig, out: Optional[Path] = None) -> RunRecord:
    """Execute the pipeline of a validated config and write its outputs.

    Raises:
        QavcError: The first stage error, after the partial record is written.
            Any other exception is re-raised the same way.
    """
    out_dir = Path(out or config.out_dir or get_settings().out_dir)
    record = RunRecord(
        version=c.__version__,
        config=config.model_dump(mode="json"),
        scenario=config.scenario or "inline",
    )
    timing: Dict[str, Any] = {"start": _now(), "stages": []}
    ctx: Context = {}
    index = -1
    stage = ""
    update_log_dimensions(seed=config.seed, scenario=record.scenario, stage="setup")
    try:
        scenario = resolve_scenario(config)
        record.scenario = scenario.name
        update_log_dimensions(scenario=scenario.name)
        for index, stage in enumerate(config.pipeline):
            seed = derive_seed(config.seed, index)
            update_log_dimensions(stage=stage, stage_seed=seed)
            logger.info("stage %s (%s) with seed %s", index, stage, seed)
            started = _now()
            clock = time.perf_counter()
            params = config.stage_params(stage)
            stage_record = STAGES[stage](scenario, params, seed, ctx)
            stage_record.index = index
            record.stages.append(stage_record)
            timing["stages"].append(
                {
                    "name": stage,
                    "index": index,
                    "start": started,
                    "end": _now(),
                    "seconds": time.perf_counter() - clock,
                }
            )
            failed = [check.name for check in stage_record.checks if not check.ok]
            if failed:
                raise VerificationError(
                    f"{len(failed)} of {len(stage_record.checks)} checks failed in "
                    f"stage {stage}: {', '.join(failed)}"
                )
    except Exception as error:  # pylint: disable=broad-exception-caught
        exit_code = _exit_code(error)
        logger.error("stage %s (%s) aborted: %s", index, stage or "setup", error)
        record.status = "failed"
        record.failure = Failure(
            stage=stage or "setup",
            index=index,
            error=type(error).__name__,
            message=str(error),
            exit_code=exit_code,
        )
        timing["end"] = _now()
        write_outputs(record, timing, out_dir)
        raise
    record.status = "ok"
    timing["end"] = _now()
    write_outputs(record, timing, out_dir)
    return record


def run(
    config_path: Union[str, Path],
    seed: Optional[int] = None,
    out: Optional[Path] = None,
) -> RunRecord:
    """Load a config file and run it; see run_config."""
    return run_config(load_config(config_path, seed), out)


def record_json(record: RunRecord) -> str:
    """The canonical text of a record: sorted keys, two-space indent."""
    return json.dumps(record.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def _scalars(result: Dict[str, Any]) -> Dict[str, Any]:
    scalar = (int, float, str, bool, type(None))
    return {k: v for k, v in result.items() if isinstance(v, scalar)}


def summary_frame(record: RunRecord) -> pd.DataFrame:
    """One row per stage with its scalar results."""
    rows = []
    for stage in record.stages:
        row = {"stage": stage.name, "index": stage.index, "seed": str(stage.seed)}
        row.update(_scalars(stage.result))
        row["checks"] = len(stage.checks)
        row["failed"] = sum(not check.ok for check in stage.checks)
        rows.append(row)
    return pd.DataFrame(rows, columns=None if rows else ["stage", "index", "seed"])


def checks_frame(record: RunRecord) -> pd.DataFrame:
    """One row per check of every stage."""
    columns = ["stage", "suite", "name", "lhs", "rhs", "relation", "tolerance", "ok"]
    rows = [
        {"stage": stage.name, **check.model_dump()}
        for stage in record.stages
        for check in stage.checks
    ]
    return pd.DataFrame(rows, columns=columns)


def _clamp(value: Any) -> Any:
    if isinstance(value, float):
        return min(max(value, 0.0), 1.0)
    return value


def render_report(record: RunRecord) -> str:
    """Markdown summary of a record; probabilities are clamped to [0, 1] here only."""
    env = Environment(
        loader=PackageLoader("qavc", "templates"), keep_trailing_newline=True
    )
    env.filters["clamp"] = _clamp
    template = env.get_template("report.md.jinja")
    return template.render(record=record, probability=c.UNIT_PROBABILITY)


def write_outputs(record: RunRecord, timing: Dict[str, Any], out_dir: Path) -> None:
    """record.json, timing.json, summary.csv, checks.csv and report.md in out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "record.json").write_text(record_json(record), encoding="utf-8")
    timing_text = json.dumps(timing, indent=2) + "\n"
    (out_dir / "timing.json").write_text(timing_text, encoding="utf-8")
    summary_frame(record).to_csv(out_dir / "summary.csv", index=False)
    checks_frame(record).to_csv(out_dir / "checks.csv", index=False)
    (out_dir / "report.md").write_text(render_report(record), encoding="utf-8")
    logger.info("wrote %s stage records to %s", len(record.stages), out_dir)
