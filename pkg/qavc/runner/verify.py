"""Verification suites: numerical checks of the identities and bounds in use."""

import itertools
import logging
import math
from typing import Callable, Dict, List

import numpy as np

from qavc.core import channel as ch
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.code import Code, QuantumCode, RandomCode
from qavc.lab import approx, capacity, derand, symmetry
from qavc.runner.models import Check
from qavc.runner.scenarios import bsc_family, correlated_state, get_scenario
from qavc.utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

# Structural identities
EXACT_TOL = 1e-10
# Bounds evaluated with eigen-solvers
BOUND_TOL = 1e-9

COVARIANCE_TRIALS = 50
PENALTY_TRIALS = 100
QUANTUM_PENALTY_TRIALS = 50
FAILURE_RATE_TRIALS = 1000


def _perm_matrix(pi: tuple) -> np.ndarray:
    return symmetry.perm_unitary(pi, 2, 3).matrix


def symmetry_suite(seed: int) -> List[Check]:
    """Covariance identity, de Finetti penalties and representation property."""
    checks = []
    n = ch.bitflip_jammer()
    for ell in (2, 3):
        code = cd.pair_parity_code(ell)
        worst = 0.0
        for trial in range(COVARIANCE_TRIALS):
            if trial == 0:
                zeta = symmetry.ghz_state(2, ell)
            else:
                zeta = qmath.random_density(2**ell, make_rng(seed, ell, trial))
            check = symmetry.verify_covariance_identity(code, n, zeta)
            worst = max(worst, check.difference)
        checks.append(
            Check.close(
                "symmetry",
                f"covariance l={ell}, {COVARIANCE_TRIALS} zeta",
                worst,
                0.0,
                EXACT_TOL,
            )
        )

    code = cd.basis_code(2, 2, 3)
    compound = symmetry.compound_error(code, n, seed=derive_seed(seed, 7))
    ghz = symmetry.ghz_state(2, 3)
    penalty = symmetry.verify_definetti_penalty(code, n, ghz, compound.value)
    checks.append(
        Check.leq(
            "symmetry", "de Finetti penalty, GHZ", penalty.lhs, penalty.bound, BOUND_TOL
        )
    )
    checks.append(Check.close("symmetry", "penalty factor l=3", penalty.factor, 256, 0))
    checks.append(
        _penalty_over_random_states(
            code, n, compound.value, PENALTY_TRIALS, derive_seed(seed, 8)
        )
    )

    depolarizing = ch.depolarizing_jammer(0.2)
    q = cd.identity_quantum_code(2, 2)
    q_compound = symmetry.compound_error(q, depolarizing, seed=derive_seed(seed, 9))
    factor = symmetry.penalty_factor(q.ell, depolarizing.in_dims[1])
    checks.append(Check.close("symmetry", "penalty factor l=2", factor, 81, 0))
    checks.append(
        _penalty_over_random_states(
            q,
            depolarizing,
            q_compound.value,
            QUANTUM_PENALTY_TRIALS,
            derive_seed(seed, 10),
        )
    )

    for pi, tau in itertools.product(itertools.permutations(range(3)), repeat=2):
        composed = tuple(pi[t] for t in tau)
        product = _perm_matrix(pi) @ _perm_matrix(tau)
        diff = float(np.max(np.abs(_perm_matrix(composed) - product)))
        checks.append(Check.close("symmetry", f"U^{pi}U^{tau}", diff, 0.0, 0.0))
    return checks


def _penalty_over_random_states(
    code: Code, n: Channel, compound_err: float, trials: int, seed: int
) -> Check:
    """Largest symmetrized error over random zeta against the penalty bound."""
    mean = cd.mean_observable(symmetry.symmetrize(code), n)
    dim = n.in_dims[1] ** code.ell
    states = [qmath.random_density(dim, make_rng(seed, t)) for t in range(trials)]
    worst = max(qmath.trace_product(zeta.matrix, mean) for zeta in states)
    factor = symmetry.penalty_factor(code.ell, n.in_dims[1])
    kind = "quantum" if isinstance(code, QuantumCode) else "classical"
    return Check.leq(
        "symmetry",
        f"de Finetti penalty, {kind}, {trials} zeta",
        worst,
        factor * compound_err,
        BOUND_TOL,
    )


def derand_suite(seed: int) -> List[Check]:
    """Pinsker, sample sizes and derandomization of classical and quantum codes."""
    checks = []
    grid = np.linspace(0.005, 0.995, 100)
    worst = min(
        derand.bin_rel_entropy(u, v) - 2 * (u - v) ** 2 for u in grid for v in grid
    )
    checks.append(Check.leq("derand", "Pinsker on 100x100 grid", 0.0, worst, 1e-15))
    checks.append(
        Check.close(
            "derand",
            "D(0.15 || 0.1)",
            derand.bin_rel_entropy(0.15, 0.1),
            0.0122351,
            1e-6,
        )
    )
    n_pinsker, n_exact = derand.sample_size(0.05, 0.1, 2, 4)
    checks.append(Check.close("derand", "n_pinsker(0.1, 2, 4)", n_pinsker, 139, 0))
    checks.append(Check.close("derand", "n_exact(0.05, 0.1, 2, 4)", n_exact, 40, 0))

    n = ch.bitflip_jammer()
    rc = symmetry.symmetrize_classical(cd.pair_parity_code(3))
    result = derand.derandomize(rc, n, 0.1, derive_seed(seed, 1))
    checks.extend(_derandomized_checks("pair parity", result, n))
    plan = result.plan
    trials = FAILURE_RATE_TRIALS
    rate = derand.empirical_failure_rate(
        rc, n, 0.1, plan.n, trials, derive_seed(seed, 2)
    )
    bound = min(plan.tail_bound, 1.0)
    slack = 3 * derand.binomial_sigma(bound, trials)
    name = f"empirical failure rate, {trials} trials"
    checks.append(Check.leq("derand", name, rate, bound, slack))

    depolarizing = ch.depolarizing_jammer(0.2)
    q_rc = symmetry.symmetrize_quantum(cd.identity_quantum_code(2, 2))
    q_result = derand.derandomize(q_rc, depolarizing, 0.1, derive_seed(seed, 3))
    checks.extend(_derandomized_checks("identity code", q_result, depolarizing))
    return checks


def _derandomized_checks(
    label: str, result: derand.DerandResult, n: Channel
) -> List[Check]:
    reduced = cd.worst_case_error(result.reduced, n).value
    checks = [
        Check.leq(
            "derand",
            f"reduced worst-case error, {label}",
            reduced,
            result.target,
            BOUND_TOL,
        )
    ]
    plan = result.plan
    if plan.bit_bound is not None:
        checks.append(
            Check.leq(
                "derand",
                f"shared bits, {label}",
                plan.shared_bits,
                plan.bit_bound + 1,
                0,
            )
        )
    return checks


def capacity_suite(seed: int) -> List[Check]:
    """Capacity estimates against the classical oracle and closed forms."""
    checks = []
    cfg = capacity.OptimizerConfig(seed=seed)
    transition = bsc_family([0.1, 0.2])
    oracle = capacity.classical_avc_oracle(transition)
    estimate = capacity.estimate_c_rand(ch.embed_classical_avc(transition), 1, cfg)
    checks.append(
        Check.close(
            "capacity",
            "BSC family vs oracle",
            estimate.value_bits_per_use,
            oracle,
            2e-3,
        )
    )
    checks.append(
        Check.close("capacity", "oracle = 1 - h(0.2)", oracle, 0.278072, 1e-4)
    )
    ident = capacity.estimate_c_rand(ch.jammer_ignoring(), 1, cfg)
    checks.append(
        Check.close(
            "capacity", "identity channel", ident.value_bits_per_use, 1.0, 1e-3
        )
    )
    checks.append(Check.leq("capacity", "grid gap", estimate.grid_gap, 0.0, 1e-3))
    phi = capacity.PureInput.normalized(np.array([1, 0, 0, 1]), 2)
    value = capacity.coherent_info(phi, ch.identity(2))
    checks.append(
        Check.close("capacity", "coherent info of Phi_2", value, 1.0, BOUND_TOL)
    )
    return checks


def approx_suite(seed: int) -> List[Check]:
    """Net covering and telescoping on the bit-flip jammer."""
    checks = []
    family = get_scenario("bitflip-jammer").family()
    eta = 0.1
    net = approx.build_state_net(family, eta, seed=derive_seed(seed, 1))
    checks.append(Check.leq("approx", "net radius", net.radius, eta, approx.COVER_TOL))
    checks.append(
        Check.leq("approx", "log10 net size", math.log10(net.size), net.log10_bound, 0)
    )

    ell = 2
    fine = approx.build_state_net(family, eta / ell, seed=derive_seed(seed, 2))
    sigma = correlated_state(2, ell)
    result = approx.telescope_approx(sigma, approx.NetProjectionStep(fine), ell)
    gap = approx.telescope_gap(family.base, sigma, result, seed=derive_seed(seed, 3))
    checks.append(
        Check.leq(
            "approx",
            "telescoped distance",
            gap.measured.value,
            gap.bound,
            approx.COVER_TOL,
        )
    )
    rc = RandomCode.deterministic(cd.basis_code(2, 2, ell))
    lifted = approx.lifted_net_gap(
        net, rc, family.base, ell, trials=200, seed=derive_seed(seed, 4)
    )
    checks.append(
        Check.leq(
            "approx",
            "lifted net gap",
            lifted.sup_sampled,
            lifted.sup_net + lifted.slack,
            approx.COVER_TOL,
        )
    )
    return checks


SUITES: Dict[str, Callable[[int], List[Check]]] = {
    "symmetry": symmetry_suite,
    "derand": derand_suite,
    "capacity": capacity_suite,
    "approx": approx_suite,
}


def run_suite(suite: str, seed: int) -> List[Check]:
    """Run one suite, or every suite in a fixed order for "all"."""
    names = list(SUITES) if suite == "all" else [suite]
    checks: List[Check] = []
    for index, name in enumerate(names):
        logger.info("running %s suite", name)
        checks.extend(SUITES[name](derive_seed(seed, index)))
    failed = [c.name for c in checks if not c.ok]
    if failed:
        logger.error("%s of %s checks failed: %s", len(failed), len(checks), failed)
    return checks
