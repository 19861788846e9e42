"""Permutation symmetry of tensor-power channels and what it buys a code.

The symmetric group acts on l-fold tensor powers by permuting factors. A code
averaged over this action (a symmetrized code) sees only the permutation
average of the jammer's state, and a de Finetti reduction bounds that by
(l + 1)^{|J|^2} times the worst error against i.i.d. jammer states.
"""

import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import minimize

from qavc.constants import STRUCTURAL_TOL
from qavc.core import channel as ch
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.code import ClassicalCode, Code, QuantumCode, RandomCode
from qavc.core.errors import DomainError, SizeError
from qavc.core.qmath import CMatrix, DensityOperator, PovmElement
from qavc.settings import get_settings
from qavc.utils import make_rng, ordered_map

logger = logging.getLogger(__name__)


class PermutationOp(BaseModel):
    """The unitary U^pi on (C^local_dim)^{⊗ ell} moving factor i to position pi(i)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ell: int
    perm: Tuple[int, ...]
    local_dim: int
    matrix: np.ndarray

    @model_validator(mode="after")
    def check_perm(self) -> "PermutationOp":
        """perm is a bijection of range(ell)."""
        if sorted(self.perm) != list(range(self.ell)):
            raise DomainError(
                f"{self.perm} is not a permutation of {self.ell} positions"
            )
        return self

    def conjugate(self, m: np.ndarray) -> CMatrix:
        """U m U^dag."""
        return self.matrix @ m @ self.matrix.T


class IdentityCheck(BaseModel):
    """Both sides of an identity that should hold exactly."""

    lhs: float
    rhs: float
    difference: float


class PenaltyCheck(BaseModel):
    """The symmetrized error against the de Finetti bound."""

    lhs: float
    compound_error: float
    factor: float
    bound: float
    ok: bool


class CompoundError(BaseModel):
    """Largest error found against i.i.d. jammer states and where it was found."""

    value: float
    sigma: DensityOperator


def _inverse(perm: Sequence[int]) -> List[int]:
    inverse = [0] * len(perm)
    for i, p in enumerate(perm):
        inverse[p] = i
    return inverse


def perm_unitary(pi: Sequence[int], local_dim: int, ell: int) -> PermutationOp:
    """U^pi |a_0 .. a_{l-1}> = |a_{pi^-1(0)} .. a_{pi^-1(l-1)}>, 0-based.

    Raises:
        DomainError: If pi is not a bijection of range(ell).
    """
    perm = tuple(int(p) for p in pi)
    if sorted(perm) != list(range(ell)):
        raise DomainError(f"{perm} is not a permutation of {ell} positions")
    matrix = qmath.subsystem_permutation([local_dim] * ell, _inverse(perm))
    return PermutationOp(ell=ell, perm=perm, local_dim=local_dim, matrix=matrix)


def permutations(
    ell: int, sample: Optional[int] = None, seed: int = 0
) -> Tuple[List[Tuple[int, ...]], bool]:
    """All permutations of range(ell) in lexicographic order, or a seeded sample.

    Returns:
        The permutations and whether they are a sample.

    Raises:
        SizeError: If ell! is above the enumeration cap and no sample size is given.
    """
    cap = get_settings().max_enumerated_block
    if ell <= cap:
        return list(itertools.permutations(range(ell))), False
    if sample is None:
        raise SizeError(
            f"{math.factorial(ell)} permutations for ell={ell} exceed the cap "
            f"(ell <= {cap}); pass a sample size"
        )
    logger.warning("using %s sampled permutations of %s positions", sample, ell)
    rng = make_rng(seed)
    return [tuple(int(p) for p in rng.permutation(ell)) for _ in range(sample)], True


def _label(perm: Sequence[int]) -> str:
    return "(" + " ".join(str(p) for p in perm) + ")"


def symmetrize_classical(
    c: ClassicalCode, sample: Optional[int] = None, seed: int = 0
) -> RandomCode:
    """Uniform mixture of the codes {(U^pi rho_m U^pi†, U^pi D_m U^pi†)}.

    Raises:
        SizeError: If ell! exceeds the cap and no sample size is given.
    """
    perms, sampled = permutations(c.ell, sample, seed)
    adim = qmath.integer_root(c.states[0].dim, c.ell)
    bdim = qmath.integer_root(c.povm[0].dim, c.ell)

    def _variant(perm: Tuple[int, ...]) -> ClassicalCode:
        u_a = perm_unitary(perm, adim, c.ell)
        u_b = perm_unitary(perm, bdim, c.ell)
        return ClassicalCode(
            ell=c.ell,
            states=[DensityOperator(matrix=u_a.conjugate(s.matrix)) for s in c.states],
            povm=[PovmElement(matrix=u_b.conjugate(d.matrix)) for d in c.povm],
        )

    variants = ordered_map(_variant, perms)
    labels = [_label(p) for p in perms]
    return RandomCode.uniform(variants, labels=labels, sampled=sampled)


def symmetrize_quantum(
    q: QuantumCode, sample: Optional[int] = None, seed: int = 0
) -> RandomCode:
    """Uniform mixture of the codes (U_pi ∘ E, D ∘ U_pi^-1).

    Raises:
        SizeError: If ell! exceeds the cap and no sample size is given.
    """
    perms, sampled = permutations(q.ell, sample, seed)
    adim = qmath.integer_root(q.encoder.out_total, q.ell)
    bdim = qmath.integer_root(q.decoder.in_total, q.ell)

    def _variant(perm: Tuple[int, ...]) -> QuantumCode:
        u_a = perm_unitary(perm, adim, q.ell).matrix
        u_b_inv = qmath.dagger(perm_unitary(perm, bdim, q.ell).matrix)
        encoder = ch.compose(ch.unitary_channel(u_a, q.encoder.out_dims), q.encoder)
        decoder = ch.compose(q.decoder, ch.unitary_channel(u_b_inv, q.decoder.in_dims))
        return QuantumCode(ell=q.ell, encoder=encoder, decoder=decoder)

    variants = ordered_map(_variant, perms)
    labels = [_label(p) for p in perms]
    return RandomCode.uniform(variants, labels=labels, sampled=sampled)


def symmetrize(code: Code, sample: Optional[int] = None, seed: int = 0) -> RandomCode:
    """symmetrize_classical or symmetrize_quantum depending on the code."""
    if isinstance(code, ClassicalCode):
        return symmetrize_classical(code, sample, seed)
    return symmetrize_quantum(code, sample, seed)


def symmetrize_state(zeta: DensityOperator, ell: int) -> DensityOperator:
    """(1/l!) sum_pi U^pi zeta U^pi† on J^l.

    Raises:
        SizeError: If ell! exceeds the enumeration cap.
        ShapeError: If zeta's dimension is not an ell-th power.
    """
    perms, _ = permutations(ell)
    local_dim = qmath.integer_root(zeta.dim, ell)
    total = np.zeros_like(zeta.matrix)
    for perm in perms:
        total = total + perm_unitary(perm, local_dim, ell).conjugate(zeta.matrix)
    return DensityOperator(matrix=qmath.hermitian_part(total / len(perms)))


def verify_covariance_identity(
    code: Code, n: Channel, zeta: DensityOperator
) -> IdentityCheck:
    """E_pi err(C_pi, zeta) and err(C, zeta') for the symmetrized jammer state zeta'.

    The left side evaluates every permuted code against zeta directly; the right
    side evaluates the original code once against the permutation average.
    """
    symmetrized = symmetrize(code)
    lhs = cd.expected_error(symmetrized, n, zeta)
    rhs = cd.error_value(code, n, symmetrize_state(zeta, code.ell))
    return IdentityCheck(lhs=lhs, rhs=rhs, difference=abs(lhs - rhs))


def penalty_factor(ell: int, jdim: int) -> int:
    """(l + 1)^{|J|^2}."""
    return (ell + 1) ** (jdim * jdim)


def verify_definetti_penalty(
    code: Code, n: Channel, zeta: DensityOperator, compound_err: float
) -> PenaltyCheck:
    """Check E_pi err(C_pi, zeta) <= (l + 1)^{|J|^2} * compound_err + 1e-9.

    Args:
        code: The deterministic code before symmetrization.
        n: Jammed channel with input factors (A, J).
        zeta: Arbitrary jammer state on J^l.
        compound_err: An upper estimate of sup_sigma err(code, sigma^{⊗l}).
    """
    lhs = cd.expected_error(symmetrize(code), n, zeta)
    factor = penalty_factor(code.ell, n.in_dims[1])
    bound = factor * compound_err
    return PenaltyCheck(
        lhs=lhs,
        compound_error=compound_err,
        factor=float(factor),
        bound=bound,
        ok=lhs <= bound + 1e-9,
    )


def iid_expectation(obs: np.ndarray, sigma: np.ndarray, ell: int) -> float:
    """tr(sigma^{⊗l} obs)."""
    return qmath.trace_product(qmath.kron_all([sigma] * ell), obs)


def compound_error(
    code: Code, n: Channel, grid_points: int = 200, seed: int = 0, starts: int = 3
) -> CompoundError:
    """sup over single-letter sigma of err(code, sigma^{⊗l}), by grid and ascent.

    Each evaluation is a trace against the code's error observable. The best
    grid points are refined with L-BFGS-B over the parametrisation
    sigma = T T^dag / tr(T T^dag).
    """
    obs = cd.observable(code, n).matrix.matrix
    jdim = n.in_dims[1]
    ell = code.ell
    grid = qmath.state_grid(jdim, grid_points, seed)
    values = [iid_expectation(obs, s.matrix, ell) for s in grid]
    best_value = max(values)
    best_sigma = grid[int(np.argmax(values))].matrix

    def _negative(x: np.ndarray) -> float:
        return -iid_expectation(obs, qmath.density_from_params(x, jdim), ell)

    for index in np.argsort(values, kind="stable")[::-1][:starts]:
        x0 = qmath.params_from_density(grid[int(index)].matrix)
        result = minimize(_negative, x0, method="L-BFGS-B")
        if -result.fun > best_value + STRUCTURAL_TOL:
            best_value = float(-result.fun)
            best_sigma = qmath.density_from_params(result.x, jdim)
    logger.debug("compound error %s after %s grid points", best_value, len(grid))
    sigma = DensityOperator.from_unnormalized(best_sigma)
    return CompoundError(value=best_value, sigma=sigma)


def ghz_state(dim: int, ell: int) -> DensityOperator:
    """(1/d) sum_jk |j..j><k..k|."""
    vec = np.zeros(dim**ell, dtype=np.complex128)
    step = sum(dim**i for i in range(ell))
    vec[np.arange(dim) * step] = 1
    return DensityOperator.from_vector(vec)
