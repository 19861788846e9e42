"""Tests for permutation symmetrization and the de Finetti penalty."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from qavc.core import channel as ch
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.code import RandomCode
from qavc.core.errors import DomainError, SizeError
from qavc.lab import symmetry
from qavc.settings import get_settings

# pylint: disable=redefined-outer-name


def test_perm_unitary_moves_factors() -> None:
    """U^pi sends the factor at position i to position pi(i)."""
    states = [qmath.basis_state(j, 3).matrix for j in range(3)]
    op = symmetry.perm_unitary((1, 2, 0), 3, 3)
    moved = op.conjugate(qmath.kron_all(states))
    # position 0 now holds old factor 2, position 1 old 0, position 2 old 1
    assert_allclose(moved, qmath.kron_all([states[2], states[0], states[1]]))
    with pytest.raises(DomainError):
        symmetry.perm_unitary((0, 0, 1), 2, 3)


def test_perm_unitary_is_a_representation() -> None:
    """U^pi U^tau = U^(pi ∘ tau) for every pair in S_3."""
    for pi, tau in itertools.product(itertools.permutations(range(3)), repeat=2):
        composed = tuple(pi[t] for t in tau)
        lhs = (
            symmetry.perm_unitary(pi, 2, 3).matrix
            @ symmetry.perm_unitary(tau, 2, 3).matrix
        )
        assert np.array_equal(lhs, symmetry.perm_unitary(composed, 2, 3).matrix)


def test_permutations_cap(monkeypatch: pytest.MonkeyPatch) -> None:
    """Above the cap permutations are sampled, or refused without a sample."""
    perms, sampled = symmetry.permutations(3)
    assert perms[0] == (0, 1, 2) and perms[-1] == (2, 1, 0) and not sampled
    monkeypatch.setenv("MAX_ENUMERATED_BLOCK", "2")
    get_settings.cache_clear()
    with pytest.raises(SizeError):
        symmetry.permutations(3)
    drawn, sampled = symmetry.permutations(3, sample=5, seed=1)
    assert sampled and len(drawn) == 5
    assert drawn == symmetry.permutations(3, sample=5, seed=1)[0]


def test_symmetrize_classical(bitflip: Channel) -> None:
    """One uniformly weighted variant per permutation, labelled by it."""
    rc = symmetry.symmetrize(cd.pair_parity_code(3))
    assert len(rc.variants) == 6
    assert rc.weights == pytest.approx([1 / 6] * 6)
    assert rc.labels is not None and rc.labels[0] == "(0 1 2)"
    # the identity permutation leaves the code alone
    zeta = qmath.basis_state(3, 8)
    assert cd.error_value(rc.variants[0], bitflip, zeta) == pytest.approx(
        cd.p_err(cd.pair_parity_code(3), bitflip, zeta)
    )


@pytest.mark.parametrize("ell", [2, 3])
def test_covariance_identity(ell: int, bitflip: Channel) -> None:
    """E_pi err(C_pi, zeta) = err(C, zeta') for random entangled zeta."""
    code = cd.pair_parity_code(ell)
    for trial in range(5):
        rng = np.random.default_rng(ell * 100 + trial)
        zeta = qmath.random_density(2**ell, rng)
        check = symmetry.verify_covariance_identity(code, bitflip, zeta)
        assert check.difference <= 1e-10


def test_covariance_identity_quantum(bitflip: Channel) -> None:
    """The same identity for a symmetrized quantum code."""
    rng = np.random.default_rng(11)
    q = cd.QuantumCode(
        ell=2,
        encoder=ch.random_channel([2], [2, 2], rng),
        decoder=ch.random_channel([2, 2], [2], rng),
    )
    zeta = qmath.random_density(4, rng)
    assert symmetry.verify_covariance_identity(q, bitflip, zeta).difference <= 1e-10


def test_symmetrize_state_is_invariant(rng: np.random.Generator) -> None:
    """The permutation average commutes with every U^pi."""
    zeta = symmetry.symmetrize_state(qmath.random_density(8, rng), 3)
    for perm in itertools.permutations(range(3)):
        op = symmetry.perm_unitary(perm, 2, 3)
        assert_allclose(op.conjugate(zeta.matrix), zeta.matrix, atol=1e-12)


def test_penalty_factor() -> None:
    """(l + 1)^{|J|^2}."""
    assert symmetry.penalty_factor(3, 2) == 256
    assert symmetry.penalty_factor(2, 2) == 81


def test_definetti_penalty_classical(bitflip: Channel) -> None:
    """The symmetrized error at any zeta stays below 256 times the compound error."""
    code = cd.pair_parity_code(3)
    compound = symmetry.compound_error(code, bitflip, grid_points=60, seed=0)
    # i.i.d. flips with probability p break the pair with probability 2p(1 - p)
    assert compound.value == pytest.approx(0.5, abs=1e-6)
    for trial in range(5):
        zeta = qmath.random_density(8, np.random.default_rng(trial))
        check = symmetry.verify_definetti_penalty(
            code, bitflip, zeta, compound.value
        )
        assert check.factor == 256
        assert check.ok
    ghz = symmetry.verify_definetti_penalty(
        code, bitflip, symmetry.ghz_state(2, 3), compound.value
    )
    assert ghz.ok


def test_definetti_penalty_quantum(bitflip: Channel) -> None:
    """Quantum analogue at l = 2 with factor 81."""
    q = cd.identity_quantum_code(2, 2)
    compound = symmetry.compound_error(q, bitflip, grid_points=40, seed=0)
    zeta = symmetry.ghz_state(2, 2)
    check = symmetry.verify_definetti_penalty(q, bitflip, zeta, compound.value)
    assert check.factor == 81
    assert check.ok


def test_compound_error_of_bitflip_basis_code(bitflip: Channel) -> None:
    """A basis code on the bit-flip jammer fails surely against sigma = |1><1|."""
    code = cd.basis_code(2, 2, 1)
    compound = symmetry.compound_error(code, bitflip, grid_points=20)
    assert compound.value == pytest.approx(1.0, abs=1e-9)


@settings(deadline=None, max_examples=10)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_compound_error_bounds_iid_errors(seed: int) -> None:
    """No i.i.d. jammer state beats the compound error."""
    n = ch.bitflip_jammer()
    code = cd.basis_code(2, 2, 2)
    compound = symmetry.compound_error(code, n, grid_points=50, seed=0)
    sigma = qmath.random_density(2, np.random.default_rng(seed))
    value = cd.p_err(code, n, qmath.tensor_power_state(sigma, 2))
    assert value <= compound.value + 1e-6


def test_ghz_state() -> None:
    """GHZ is pure with equal weight on |0..0> and |1..1>."""
    ghz = symmetry.ghz_state(2, 3).matrix
    assert ghz[0, 0] == pytest.approx(0.5)
    assert ghz[0, 7] == pytest.approx(0.5)
    assert qmath.von_neumann_entropy(ghz) == pytest.approx(0.0, abs=1e-9)


def test_symmetrized_code_beats_ghz_jammer(bitflip: Channel) -> None:
    """Symmetrizing never raises the worst case above the deterministic code."""
    code = cd.pair_parity_code(3)
    rc = symmetry.symmetrize(code)
    worst_sym = cd.worst_case_error(rc, bitflip).value
    worst_det = cd.worst_case_error(RandomCode.deterministic(code), bitflip).value
    assert worst_sym <= worst_det + 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("ell", [2, 3])
def test_covariance_identity_at_scale(ell: int, bitflip: Channel) -> None:
    """100 jammer states per block length, GHZ first."""
    code = cd.pair_parity_code(ell)
    states = [symmetry.ghz_state(2, ell)] + [
        qmath.random_density(2**ell, np.random.default_rng(5000 + trial))
        for trial in range(99)
    ]
    for zeta in states:
        check = symmetry.verify_covariance_identity(code, bitflip, zeta)
        assert check.difference <= 1e-10


@pytest.mark.slow
def test_definetti_penalties_at_scale(bitflip: Channel) -> None:
    """100 classical states at l = 3 and 50 quantum ones at l = 2."""
    code = cd.basis_code(2, 2, 3)
    compound = symmetry.compound_error(code, bitflip, seed=0)
    for trial in range(100):
        zeta = qmath.random_density(8, np.random.default_rng(6000 + trial))
        check = symmetry.verify_definetti_penalty(code, bitflip, zeta, compound.value)
        assert check.factor == 256
        assert check.ok

    depolarizing = ch.depolarizing_jammer(0.2)
    q = cd.identity_quantum_code(2, 2)
    q_compound = symmetry.compound_error(q, depolarizing, seed=0)
    # both letters depolarized: 1 - (1 - 3/4 * 0.2)^2
    assert q_compound.value == pytest.approx(0.2775, abs=1e-5)
    for trial in range(50):
        zeta = qmath.random_density(4, np.random.default_rng(7000 + trial))
        check = symmetry.verify_definetti_penalty(
            q, depolarizing, zeta, q_compound.value
        )
        assert check.factor == 81
        assert check.ok
