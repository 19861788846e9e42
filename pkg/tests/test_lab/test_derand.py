"""Tests for sample-size accounting and derandomization."""

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qavc.core import channel as ch
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.code import ClassicalCode, RandomCode
from qavc.core.errors import DerandomizationError, DomainError
from qavc.lab import derand, symmetry
from qavc.settings import get_settings

# pylint: disable=redefined-outer-name


@pytest.fixture
def coin_code() -> RandomCode:
    """Half a basis code, half the same code with its decoder outcomes swapped.

    On the bit-flip jammer the two error observables are |1><1| and |0><0|, so
    the mean is 1/2 and a single draw always fails the order test at 0.6.
    """
    plain = cd.basis_code(2, 2)
    swapped = ClassicalCode(ell=1, states=plain.states, povm=plain.povm[::-1])
    return RandomCode.uniform([plain, swapped], labels=["plain", "swapped"])


def test_pinsker_sample_size() -> None:
    """floor(l ln|J| / (2 delta^2)) + 1 on a small grid."""
    for delta in (0.05, 0.1, 0.2):
        for ell in (1, 2, 4):
            n_pinsker, _ = derand.sample_size(0.1, delta, 2, ell)
            assert n_pinsker == math.floor(ell * math.log(2) / (2 * delta**2)) + 1
    assert derand.sample_size(0.05, 0.1, 2, 4) == (139, 40)


def test_exact_size_never_exceeds_pinsker() -> None:
    """D(eps + delta || eps) >= 2 delta^2 makes the exact size the smaller one."""
    for epsilon in (0.0, 0.05, 0.3, 0.6):
        n_pinsker, n_exact = derand.sample_size(epsilon, 0.1, 2, 3)
        assert n_exact <= n_pinsker


def test_bin_rel_entropy() -> None:
    """Closed-form values in nats."""
    assert derand.bin_rel_entropy(0.15, 0.1) == pytest.approx(0.0122351, abs=1e-6)
    assert derand.bin_rel_entropy(0.3, 0.3) == 0.0
    with pytest.raises(DomainError):
        derand.bin_rel_entropy(1.2, 0.5)


def test_infinite_relative_entropy_warns(caplog: pytest.LogCaptureFixture) -> None:
    """A zero-error code has infinite D, needs one sample and logs a warning."""
    with caplog.at_level(logging.WARNING, logger="qavc.lab.derand"):
        assert math.isinf(derand.bin_rel_entropy(0.1, 0.0))
    assert "infinite" in caplog.text
    assert derand.sample_size(0.0, 0.1, 2, 3)[1] == 1
    assert derand.tail_bound(5, 0.0, 0.1, 2, 3) == 0.0


def test_parameter_domain() -> None:
    """epsilon + delta must stay below one and delta above zero."""
    with pytest.raises(DomainError):
        derand.sample_size(0.7, 0.3, 2, 1)
    with pytest.raises(DomainError):
        derand.sample_size(0.1, 0.0, 2, 1)
    with pytest.raises(DomainError):
        derand.plan_derandomization(0.1, 0.1, 2, 1, n=0)


def test_tail_bound() -> None:
    """|J|^l at n = 0, then decaying exponentially."""
    assert derand.tail_bound(0, 0.1, 0.1, 2, 3) == 8.0
    values = [derand.tail_bound(n, 0.1, 0.1, 2, 3) for n in (10, 50, 200)]
    assert values[0] > values[1] > values[2]
    divergence = derand.bin_rel_entropy(0.2, 0.1)
    assert values[1] == pytest.approx(8 * math.exp(-50 * divergence))


def test_plan() -> None:
    """The plan records both sizes, the chosen one and the bit accounting."""
    plan = derand.plan_derandomization(0.05, 0.1, 2, 4)
    assert plan.n == plan.n_exact == 40
    assert plan.n_pinsker == 139
    assert plan.tail_bound < 1
    assert plan.shared_bits == pytest.approx(math.log2(40))
    expected_bits = 2 - 2 * math.log2(0.1) + math.log2(math.log(2))
    assert plan.bit_bound == pytest.approx(expected_bits)
    trivial = derand.plan_derandomization(0.05, 0.1, 1, 4)
    assert trivial.bit_bound is None


def test_derandomize_pair_parity(bitflip: Channel) -> None:
    """Symmetrized pair parity shrinks to n_exact variants within the target."""
    rc = symmetry.symmetrize(cd.pair_parity_code(3))
    result = derand.derandomize(rc, bitflip, delta=0.1, rng_seed=42)
    assert result.plan.epsilon == pytest.approx(2 / 3, abs=1e-9)
    assert result.plan.n == 87
    assert len(result.chosen) == len(result.reduced.variants) == 87
    assert result.achieved <= result.target + 1e-9
    assert cd.worst_case_error(result.reduced, bitflip).value <= result.target + 1e-9
    assert result.plan.shared_bits <= result.plan.bit_bound + 1


def test_derandomize_is_reproducible(bitflip: Channel) -> None:
    """The same seed picks the same variants."""
    rc = symmetry.symmetrize(cd.pair_parity_code(3))
    first = derand.derandomize(rc, bitflip, delta=0.1, rng_seed=3, n=30)
    second = derand.derandomize(rc, bitflip, delta=0.1, rng_seed=3, n=30)
    assert first.chosen == second.chosen


def test_single_draw_always_fails(
    coin_code: RandomCode, bitflip: Channel, monkeypatch: pytest.MonkeyPatch
) -> None:
    """With n = 1 every attempt fails and the error carries the diagnostics."""
    monkeypatch.setenv("DERAND_MAX_ATTEMPTS", "5")
    get_settings.cache_clear()
    with pytest.raises(DerandomizationError) as excinfo:
        derand.derandomize(coin_code, bitflip, delta=0.1, rng_seed=0, n=1)
    assert excinfo.value.attempts == 5
    assert excinfo.value.exit_code == 3
    # every single draw has an error observable of norm one
    assert excinfo.value.failure_rate == 1.0
    assert excinfo.value.best_error == pytest.approx(1.0)
    assert excinfo.value.target == pytest.approx(0.6)
    assert "failed in 5 of 5 attempts" in str(excinfo.value)
    assert "1.0000 against target 0.6000" in str(excinfo.value)
    rate = derand.empirical_failure_rate(
        coin_code, bitflip, delta=0.1, n=1, trials=50, rng_seed=0
    )
    assert rate == 1.0


def test_derandomization_error_diagnostics() -> None:
    """The failure rate is the share of failed attempts, not a constant."""
    error = DerandomizationError(4, 2, 0.45, 0.4, 0.8)
    assert error.failure_rate == 0.5
    assert error.exit_code == 3
    assert "failed in 2 of 4 attempts" in str(error)


def test_failure_rate_of_two_draws(coin_code: RandomCode, bitflip: Channel) -> None:
    """Two draws pass exactly when they differ, which happens half the time."""
    trials = 400
    rate = derand.empirical_failure_rate(
        coin_code, bitflip, delta=0.1, n=2, trials=trials, rng_seed=9
    )
    assert abs(rate - 0.5) <= 3 * derand.binomial_sigma(0.5, trials)
    assert rate <= derand.tail_bound(2, 0.5, 0.1, 2, 1)
    with pytest.raises(DomainError):
        derand.empirical_failure_rate(coin_code, bitflip, 0.1, 2, 0, 9)


@settings(deadline=None, max_examples=20)
@given(
    st.floats(min_value=0.0, max_value=0.8),
    st.floats(min_value=0.01, max_value=0.19),
    st.integers(min_value=1, max_value=6),
)
def test_exact_size_drives_tail_below_one(
    epsilon: float, delta: float, ell: int
) -> None:
    """The smallest n from sample_size is where the tail bound first drops below one."""
    _, n_exact = derand.sample_size(epsilon, delta, 2, ell)
    assert derand.tail_bound(n_exact, epsilon, delta, 2, ell) < 1
    if n_exact > 1:
        assert derand.tail_bound(n_exact - 1, epsilon, delta, 2, ell) >= 1 - 1e-12


def test_empirical_mean_matches_counts(bitflip: Channel) -> None:
    """Each chosen index weighs 1/n in the reduced code."""
    rc = symmetry.symmetrize(cd.pair_parity_code(3))
    result = derand.derandomize(rc, bitflip, delta=0.1, rng_seed=1, n=12)
    expected = sum(
        cd.observable(rc.variants[i], bitflip).matrix.matrix for i in result.chosen
    ) / len(result.chosen)
    reduced = cd.mean_observable(result.reduced, bitflip)
    np.testing.assert_allclose(reduced, expected, atol=1e-12)
    assert qmath.lambda_max(reduced) == pytest.approx(result.achieved, abs=1e-9)


def test_derandomize_identity_quantum_code() -> None:
    """The symmetrized identity code against a 0.2 depolarizing jammer letter.

    Each letter keeps entanglement fidelity 1 - 3/4 * 0.2, so epsilon is
    1 - 0.85^2 and the exact sample size is 60.
    """
    depolarizing = ch.depolarizing_jammer(0.2)
    rc = symmetry.symmetrize(cd.identity_quantum_code(2, 2))
    result = derand.derandomize(rc, depolarizing, delta=0.1, rng_seed=1)
    assert result.plan.epsilon == pytest.approx(0.2775, abs=1e-9)
    assert result.target == pytest.approx(0.3775, abs=1e-9)
    assert result.plan.n == 60
    assert len(result.reduced.variants) == 60
    assert cd.worst_case_error(result.reduced, depolarizing).value <= (
        result.target + 1e-9
    )
    assert result.attempts == 1


@pytest.mark.slow
def test_failure_rate_at_scale(bitflip: Channel) -> None:
    """1000 Monte Carlo trials of the pair-parity plan stay within the tail bound."""
    rc = symmetry.symmetrize(cd.pair_parity_code(3))
    plan = derand.plan_derandomization(2 / 3, 0.1, 2, 3)
    trials = 1000
    rate = derand.empirical_failure_rate(
        rc, bitflip, delta=0.1, n=plan.n, trials=trials, rng_seed=17
    )
    bound = min(plan.tail_bound, 1.0)
    assert rate <= bound + 3 * derand.binomial_sigma(bound, trials)
