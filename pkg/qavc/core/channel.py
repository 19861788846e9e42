"""CPTP maps in Kraus form and the operations the laboratory needs on them.

Channels keep their input and output as lists of tensor factors. A jammed
channel has input factors (A, J); its l-th tensor power has input factors
(A_1..A_l, J_1..J_l) and output factors (B_1..B_l). tensor_power documents
the permutation used to get there from the naive ((A J)_1 .. (A J)_l) order.
"""

import itertools
import logging
import math
from typing import Any, List, Optional, Sequence

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    field_serializer,
    field_validator,
    model_validator,
)

from qavc.constants import DIAMOND_GAP_TOL, STRUCTURAL_TOL, TP_TOL
from qavc.core import qmath
from qavc.core.errors import DomainError, ShapeError
from qavc.core.qmath import CMatrix, DensityOperator, PovmElement
from qavc.settings import get_settings
from qavc.utils import make_rng, ordered_map

logger = logging.getLogger(__name__)

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


class Channel(BaseModel):
    """A completely positive trace-preserving map rho -> sum_k K_k rho K_k^dag."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    in_dims: List[int]
    out_dims: List[int]
    kraus: List[np.ndarray]

    @field_validator("in_dims", "out_dims")
    @classmethod
    def validate_dims(cls, dims: List[int]) -> List[int]:
        """Factor lists are non-empty and every factor has dimension >= 1."""
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"invalid factor dimensions {dims}")
        return dims

    @field_validator("kraus", mode="before")
    @classmethod
    def coerce_kraus(cls, value: Any) -> List[np.ndarray]:
        """Decode Kraus operators and drop the exactly-zero ones."""
        operators = [qmath.as_cmatrix(k) for k in value]
        return [k for k in operators if np.any(k != 0)]

    @model_validator(mode="after")
    def check_trace_preserving(self) -> "Channel":
        """Every Kraus operator is out_total x in_total and sum K^dag K = 1."""
        if not self.kraus:
            raise ValueError("a channel needs at least one non-zero Kraus operator")
        shape = (self.out_total, self.in_total)
        for k in self.kraus:
            if k.shape != shape:
                raise ShapeError(f"Kraus operator of shape {k.shape}, expected {shape}")
        total = sum(qmath.dagger(k) @ k for k in self.kraus)
        residual = float(np.linalg.norm(total - np.eye(self.in_total), "fro"))
        if residual > TP_TOL:
            raise ValueError(
                "Kraus set is not trace preserving: "
                f"||sum K^dag K - 1||_F = {residual:.3g}"
            )
        return self

    @field_serializer("kraus")
    def serialize_kraus(self, kraus: List[np.ndarray]) -> list:
        """Complex entries as [re, im] pairs."""
        return [qmath.to_pairs(k) for k in kraus]

    @property
    def in_total(self) -> int:
        """Dimension of the whole input space."""
        return math.prod(self.in_dims)

    @property
    def out_total(self) -> int:
        """Dimension of the whole output space."""
        return math.prod(self.out_dims)


class DiamondDistance(BaseModel):
    """Certified interval for the half diamond distance of two channels."""

    lower: float
    upper: float
    converged: bool
    value: float


class JammerFamily(BaseModel):
    """A jammed channel with input factors (A, J) and an optional state set S."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base: Channel
    classical_states: Optional[List[DensityOperator]] = None

    @model_validator(mode="after")
    def check_states(self) -> "JammerFamily":
        """The base has exactly two input factors and states live on J."""
        if len(self.base.in_dims) != 2:
            raise ShapeError(
                f"a jammer family needs input factors (A, J), got {self.base.in_dims}"
            )
        for state in self.classical_states or []:
            if state.dim != self.jdim:
                raise ShapeError(f"state of dim {state.dim} on a J of dim {self.jdim}")
        return self

    @property
    def adim(self) -> int:
        """Dimension of A."""
        return self.base.in_dims[0]

    @property
    def jdim(self) -> int:
        """Dimension of J."""
        return self.base.in_dims[1]

    @property
    def bdim(self) -> int:
        """Dimension of B."""
        return self.base.out_total


def apply_operator(n: Channel, m: np.ndarray) -> CMatrix:
    """sum_k K m K^dag for any operator m on the input space."""
    if m.shape != (n.in_total, n.in_total):
        raise ShapeError(
            f"operator of shape {m.shape} on a channel with input {n.in_total}"
        )
    out = np.zeros((n.out_total, n.out_total), dtype=np.complex128)
    for k in n.kraus:
        out += k @ m @ qmath.dagger(k)
    return out


def adjoint_operator(n: Channel, x: np.ndarray) -> CMatrix:
    """Heisenberg picture sum_k K^dag x K for any operator x on the output space."""
    if x.shape != (n.out_total, n.out_total):
        raise ShapeError(
            f"operator of shape {x.shape} on a channel with output {n.out_total}"
        )
    out = np.zeros((n.in_total, n.in_total), dtype=np.complex128)
    for k in n.kraus:
        out += qmath.dagger(k) @ x @ k
    return out


def apply(n: Channel, rho: DensityOperator) -> DensityOperator:
    """The output state N(rho).

    Raises:
        ShapeError: If rho does not live on the channel input.
    """
    out = qmath.hermitian_part(apply_operator(n, rho.matrix))
    trace = float(np.trace(out).real)
    if abs(trace - 1) <= TP_TOL * n.in_total:
        out = out / trace
    return DensityOperator(matrix=out)


def adjoint_apply(n: Channel, x: PovmElement) -> PovmElement:
    """The effect N*(x), so that tr(N(rho) x) = tr(rho N*(x)).

    Raises:
        ShapeError: If x does not live on the channel output.
    """
    return PovmElement(matrix=qmath.hermitian_part(adjoint_operator(n, x.matrix)))


def choi_matrix(n: Channel) -> CMatrix:
    """Unnormalised Choi matrix sum_ij |i><j| ⊗ N(|i><j|), reference factor first."""
    vecs = np.stack([k.T.reshape(-1) for k in n.kraus], axis=1)
    return vecs @ qmath.dagger(vecs)


def choi_state(n: Channel) -> DensityOperator:
    """The Choi state (id ⊗ N)(Phi) on R ⊗ out, R a copy of the input."""
    return DensityOperator.from_unnormalized(choi_matrix(n))


def from_choi(
    choi: np.ndarray, in_dims: Sequence[int], out_dims: Sequence[int]
) -> Channel:
    """Minimal Kraus set of the channel whose unnormalised Choi matrix is choi."""
    in_total, out_total = math.prod(in_dims), math.prod(out_dims)
    values, vectors = qmath.eig_hermitian(choi)
    kraus = [
        math.sqrt(value) * vectors[:, i].reshape(in_total, out_total).T
        for i, value in enumerate(values)
        if value > STRUCTURAL_TOL
    ]
    return Channel(in_dims=list(in_dims), out_dims=list(out_dims), kraus=kraus)


def _compressed(n: Channel) -> Channel:
    """Rebuild n from its Choi matrix when it has more Kraus operators than needed."""
    if len(n.kraus) <= n.in_total * n.out_total:
        return n
    return from_choi(choi_matrix(n), n.in_dims, n.out_dims)


def channels_close(n1: Channel, n2: Channel, tol: float = STRUCTURAL_TOL) -> bool:
    """Whether two channels have entrywise equal Choi matrices within tol."""
    if (n1.in_total, n1.out_total) != (n2.in_total, n2.out_total):
        return False
    return bool(np.max(np.abs(choi_matrix(n1) - choi_matrix(n2))) <= tol)


def fix_jammer(
    n: Channel, sigma: DensityOperator, jammer_factors: Optional[int] = None
) -> Channel:
    """The channel N_sigma(rho) = N(rho ⊗ sigma) on the remaining input factors.

    sigma is purified as sum_i sqrt(p_i)|v_i>|v_i'> and the purification is
    absorbed into the Kraus operators, K_ki = sqrt(p_i) K (1 ⊗ |v_i>), so the
    result has rank(sigma) * |kraus| operators.

    Args:
        n: Channel whose trailing input factors are the jammer's.
        sigma: Jammer state on those factors.
        jammer_factors: How many trailing factors belong to the jammer. Defaults
            to half of them, which is the J block of a base or powered channel.

    Raises:
        ShapeError: If sigma does not live on the jammer factors.
    """
    count = jammer_factors
    if count is None:
        count = max(1, len(n.in_dims) // 2)
    if not 1 <= count < len(n.in_dims):
        raise ShapeError(f"cannot split {count} jammer factors off {n.in_dims}")
    sender_dims = n.in_dims[:-count]
    jdim = math.prod(n.in_dims[-count:])
    if sigma.dim != jdim:
        raise ShapeError(f"jammer state of dim {sigma.dim}, expected {jdim}")
    values, vectors = qmath.eig_hermitian(sigma.matrix)
    sender_eye = np.eye(math.prod(sender_dims), dtype=np.complex128)
    kraus = []
    for i, p in enumerate(values):
        if p <= 1e-15:
            continue
        embed = qmath.kron(sender_eye, vectors[:, i : i + 1])
        kraus.extend(math.sqrt(p) * k @ embed for k in n.kraus)
    fixed = Channel(in_dims=sender_dims, out_dims=list(n.out_dims), kraus=kraus)
    return _compressed(fixed)


def tensor_power(n: Channel, ell: int) -> Channel:
    """The channel N^{⊗ ell} with factor-major ordering.

    The naive tensor product orders the input as (f_0 .. f_{k-1}) per copy.
    Here factor f of copy c moves from position c*k + f to position f*ell + c,
    giving (A_1..A_l, J_1..J_l) for a jammed channel. Outputs are reordered the
    same way. Kraus operators are all ell-fold products of the base ones.

    Raises:
        DomainError: If ell < 1.
        SizeError: If the powered matrices would exceed the entry cap.
    """
    if ell < 1:
        raise DomainError(f"tensor power needs ell >= 1, got {ell}")
    if ell == 1:
        return n
    qmath.check_size(n.out_total**ell, n.in_total**ell)
    p_in = _factor_major(n.in_dims, ell)
    p_out = _factor_major(n.out_dims, ell)
    kraus = [
        p_out @ qmath.kron_all(combo) @ p_in.T
        for combo in itertools.product(n.kraus, repeat=ell)
    ]
    in_dims = [d for d in n.in_dims for _ in range(ell)]
    out_dims = [d for d in n.out_dims for _ in range(ell)]
    return _compressed(Channel(in_dims=in_dims, out_dims=out_dims, kraus=kraus))


def _factor_major(dims: Sequence[int], ell: int) -> CMatrix:
    k = len(dims)
    perm = [c * k + f for f in range(k) for c in range(ell)]
    return qmath.subsystem_permutation(list(dims) * ell, perm)


def embed_classical_avc(w: Any) -> Channel:
    """Embed a classical AVC N(y|x,s) as a channel on X ⊗ S that dephases both inputs.

    Args:
        w: Transition probabilities indexed w[s][x][y].

    Raises:
        DomainError: If w is not a 3-index row-stochastic array.
    """
    probs = np.asarray(w, dtype=float)
    if probs.ndim != 3:
        raise DomainError(
            f"transition array must be indexed [s][x][y], got shape {probs.shape}"
        )
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=2), 1, atol=1e-12, rtol=0):
        raise DomainError("transition probabilities are not row-stochastic")
    n_s, n_x, n_y = probs.shape
    kraus = []
    for x, s, y in itertools.product(range(n_x), range(n_s), range(n_y)):
        if probs[s, x, y] > 0:
            op = np.zeros((n_y, n_x * n_s), dtype=np.complex128)
            op[y, x * n_s + s] = math.sqrt(probs[s, x, y])
            kraus.append(op)
    return Channel(in_dims=[n_x, n_s], out_dims=[n_y], kraus=kraus)


def choi_channel(n: Channel) -> Channel:
    """The channel Gamma(sigma) = (id_A ⊗ N)(Phi_A ⊗ sigma) from J to A ⊗ B.

    Gamma(sigma) is the Choi state of N_sigma for every jammer state sigma.

    Raises:
        ShapeError: If n does not have input factors (A, J).
    """
    if len(n.in_dims) != 2:
        raise ShapeError(
            f"the Choi channel needs input factors (A, J), got {n.in_dims}"
        )
    adim, jdim = n.in_dims
    phi = np.zeros((adim * adim, 1), dtype=np.complex128)
    phi[np.arange(adim) * (adim + 1), 0] = 1 / math.sqrt(adim)
    prepare = qmath.kron(phi, np.eye(jdim, dtype=np.complex128))
    ref_eye = np.eye(adim, dtype=np.complex128)
    kraus = [qmath.kron(ref_eye, k) @ prepare for k in n.kraus]
    return Channel(in_dims=[jdim], out_dims=[adim] + list(n.out_dims), kraus=kraus)


def compose(outer: Channel, inner: Channel) -> Channel:
    """outer ∘ inner.

    Raises:
        ShapeError: If inner's output is not outer's input.
    """
    if inner.out_total != outer.in_total:
        raise ShapeError(
            f"cannot compose: inner output {inner.out_total} "
            f"!= outer input {outer.in_total}"
        )
    kraus = [a @ b for a in outer.kraus for b in inner.kraus]
    return _compressed(
        Channel(in_dims=list(inner.in_dims), out_dims=list(outer.out_dims), kraus=kraus)
    )


def extend(n: Channel, left: int = 1, right: int = 1) -> Channel:
    """id_left ⊗ N ⊗ id_right; trivial identity factors are omitted."""
    eye_l = np.eye(left, dtype=np.complex128)
    eye_r = np.eye(right, dtype=np.complex128)
    kraus = [qmath.kron(eye_l, qmath.kron(k, eye_r)) for k in n.kraus]
    lead = [left] if left > 1 else []
    tail = [right] if right > 1 else []
    return Channel(
        in_dims=lead + list(n.in_dims) + tail,
        out_dims=lead + list(n.out_dims) + tail,
        kraus=kraus,
    )


def identity(dim: int) -> Channel:
    """The identity channel on one factor of dimension dim."""
    return Channel(in_dims=[dim], out_dims=[dim], kraus=[np.eye(dim)])


def unitary_channel(u: np.ndarray, in_dims: Optional[Sequence[int]] = None) -> Channel:
    """rho -> U rho U^dag."""
    u = qmath.as_cmatrix(u)
    dims = list(in_dims) if in_dims is not None else [u.shape[1]]
    return Channel(in_dims=dims, out_dims=dims, kraus=[u])


def dephasing(dim: int) -> Channel:
    """Complete dephasing in the computational basis."""
    return Channel(
        in_dims=[dim],
        out_dims=[dim],
        kraus=[qmath.projector(qmath.ket(j, dim)) for j in range(dim)],
    )


def fully_depolarizing(in_dims: Sequence[int], out_dim: int) -> Channel:
    """rho -> tr(rho) 1/out_dim."""
    in_total = math.prod(in_dims)
    kraus = []
    for b, i in itertools.product(range(out_dim), range(in_total)):
        op = np.zeros((out_dim, in_total), dtype=np.complex128)
        op[b, i] = 1 / math.sqrt(out_dim)
        kraus.append(op)
    return Channel(in_dims=list(in_dims), out_dims=[out_dim], kraus=kraus)


def _controlled_by_jammer(unitaries: Sequence[np.ndarray]) -> Channel:
    """sum_j U_j rho U_j^dag <j|sigma|j>: read J in its basis, apply U_j, discard J."""
    adim = unitaries[0].shape[0]
    jdim = len(unitaries)
    kraus = [
        qmath.kron(u, qmath.dagger(qmath.ket(j, jdim)))
        for j, u in enumerate(unitaries)
    ]
    return Channel(in_dims=[adim, jdim], out_dims=[adim], kraus=kraus)


def bitflip_jammer() -> Channel:
    """CNOT with control J and target A, then discard J."""
    return _controlled_by_jammer([np.eye(2), _PAULI_X])


def dephasing_jammer() -> Channel:
    """Controlled-Z with control J, then discard J."""
    return _controlled_by_jammer([np.eye(2), _PAULI_Z])


def jammer_ignoring(
    adim: int = 2, jdim: int = 2, inner: Optional[np.ndarray] = None
) -> Channel:
    """Discard J and apply the unitary inner (identity by default) to A."""
    u = np.eye(adim) if inner is None else qmath.as_cmatrix(inner)
    return _controlled_by_jammer([u] * jdim)


def depolarizing_jammer(p: float = 1.0) -> Channel:
    """Letter 0 leaves the qubit alone; letter 1 depolarizes it with probability p."""
    if not 0 <= p <= 1:
        raise DomainError(f"depolarizing probability {p} not in [0, 1]")
    bra0 = qmath.dagger(qmath.ket(0, 2))
    bra1 = qmath.dagger(qmath.ket(1, 2))
    kraus = [
        qmath.kron(np.eye(2), bra0),
        math.sqrt(1 - p) * qmath.kron(np.eye(2), bra1),
    ]
    paulis = [np.eye(2), _PAULI_X, np.array([[0, -1j], [1j, 0]]), _PAULI_Z]
    kraus.extend(math.sqrt(p) / 2 * qmath.kron(sigma, bra1) for sigma in paulis)
    return Channel(in_dims=[2, 2], out_dims=[2], kraus=kraus)


def random_channel(
    in_dims: Sequence[int],
    out_dims: Sequence[int],
    rng: np.random.Generator,
    n_kraus: Optional[int] = None,
) -> Channel:
    """A random channel from a Haar-like random isometry into out ⊗ environment."""
    in_total, out_total = math.prod(in_dims), math.prod(out_dims)
    count = n_kraus or max(2, math.ceil(in_total / out_total))
    if count * out_total < in_total:
        raise DomainError(
            f"{count} Kraus operators cannot form an isometry from {in_total}"
        )
    shape = (count * out_total, in_total)
    ginibre = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    isometry, _ = np.linalg.qr(ginibre)
    kraus = [isometry[i * out_total : (i + 1) * out_total, :] for i in range(count)]
    return Channel(in_dims=list(in_dims), out_dims=list(out_dims), kraus=kraus)


def is_classical_jammer(n: Channel, jammer_factors: int = 1) -> bool:
    """Whether N ∘ (id ⊗ Delta_J) = N, i.e. N dephases the jammer input."""
    jdim = math.prod(n.in_dims[-jammer_factors:])
    sender = math.prod(n.in_dims[:-jammer_factors])
    dephased = compose(n, extend(dephasing(jdim), left=sender, right=1))
    return channels_close(n, dephased, tol=1e-9)


def _check_comparable(n1: Channel, n2: Channel) -> None:
    if (n1.in_total, n1.out_total) != (n2.in_total, n2.out_total):
        raise ShapeError(
            f"cannot compare channels {n1.in_total}->{n1.out_total} "
            f"and {n2.in_total}->{n2.out_total}"
        )


def diamond_upper_bound(n1: Channel, n2: Channel) -> float:
    """Dual-feasible upper bound on 1/2 ||N1 - N2||_diamond.

    With Delta = C1 - C2 the Choi difference, the positive part Delta_+ is a
    feasible point of the dual problem, giving ||tr_out Delta_+||_inf, which
    equals 1/2 ||tr_out |Delta| ||_inf for trace-preserving pairs. The bound
    never exceeds the Choi trace-norm bound and is exact for covariant pairs.

    Raises:
        ShapeError: If the channels have different input or output dimensions.
    """
    _check_comparable(n1, n2)
    bounds = choi_upper_bounds(
        choi_matrix(n1), choi_matrix(n2)[None], n1.in_total, n1.out_total
    )
    return float(bounds[0])


def choi_upper_bounds(
    choi: np.ndarray, others: np.ndarray, in_total: int, out_total: int
) -> np.ndarray:
    """diamond_upper_bound between one Choi matrix and a stack of others.

    Args:
        choi: Unnormalised Choi matrix, shape (d, d) with d = in_total * out_total.
        others: Stack of Choi matrices, shape (k, d, d).
        in_total: Input dimension of the channels.
        out_total: Output dimension of the channels.

    Returns:
        The k upper bounds, each capped at 1.
    """
    delta = others - choi[None]
    delta = (delta + np.conj(np.swapaxes(delta, 1, 2))) / 2
    values, vectors = np.linalg.eigh(delta)
    adjoint = np.conj(np.swapaxes(vectors, 1, 2))
    absolute = (vectors * np.abs(values)[:, None, :]) @ adjoint
    blocks = absolute.reshape(-1, in_total, out_total, in_total, out_total)
    reduced = np.einsum("kiojo->kij", blocks)
    top = np.linalg.eigvalsh(reduced)[:, -1]
    return np.minimum(1.0, np.maximum(top, 0.0) / 2)


def _lifted_kraus(n: Channel, ref_dim: int) -> List[CMatrix]:
    eye = np.eye(ref_dim, dtype=np.complex128)
    return [qmath.kron(eye, k) for k in n.kraus]


def _see_saw(
    lift1: List[CMatrix],
    lift2: List[CMatrix],
    psi: np.ndarray,
    max_iter: int,
    tol: float,
) -> float:
    """Alternate Helstrom projectors and top eigenvectors from the input psi.

    Each round is monotone: the value is the trace distance of the two output
    states for the current input, so it is always a valid lower bound.
    """
    best = 0.0
    for iteration in range(max_iter):
        omega = sum(k @ np.outer(psi, psi.conj()) @ qmath.dagger(k) for k in lift1)
        omega -= sum(k @ np.outer(psi, psi.conj()) @ qmath.dagger(k) for k in lift2)
        values, vectors = qmath.eig_hermitian(qmath.hermitian_part(omega))
        positive = vectors[:, values > 0]
        value = float(np.sum(values[values > 0]))
        if iteration and value - best <= tol:
            best = max(best, value)
            break
        best = max(best, value)
        helstrom = positive @ qmath.dagger(positive)
        witness = sum(qmath.dagger(k) @ helstrom @ k for k in lift1)
        witness -= sum(qmath.dagger(k) @ helstrom @ k for k in lift2)
        _, top = qmath.eig_hermitian(qmath.hermitian_part(witness))
        psi = top[:, 0]
    logger.debug("see-saw stopped after %s rounds at %s", iteration + 1, best)
    return min(best, 1.0)


def diamond_distance(
    n1: Channel, n2: Channel, seed: int = 0, restarts: Optional[int] = None
) -> DiamondDistance:
    """Certified interval for 1/2 ||N1 - N2||_diamond.

    The lower end is the best stabilized trace distance found by see-saw ascent
    over pure inputs on R ⊗ in with |R| = in_total, started from the maximally
    entangled input and from seeded random inputs. The upper end is
    diamond_upper_bound. The pair is put in a canonical order first, so the
    result is exactly symmetric in its arguments.

    Raises:
        ShapeError: If the channels have different input or output dimensions.
    """
    _check_comparable(n1, n2)
    if choi_matrix(n1).tobytes() > choi_matrix(n2).tobytes():
        n1, n2 = n2, n1
    settings = get_settings()
    restarts = settings.diamond_restarts if restarts is None else restarts
    dim = n1.in_total
    lift1 = _lifted_kraus(n1, dim)
    lift2 = _lifted_kraus(n2, dim)

    phi = np.zeros(dim * dim, dtype=np.complex128)
    phi[np.arange(dim) * (dim + 1)] = 1 / math.sqrt(dim)
    starts = [phi] + [
        qmath.random_pure_vector(dim * dim, make_rng(seed, r)) for r in range(restarts)
    ]
    values = ordered_map(
        lambda psi: _see_saw(
            lift1, lift2, psi, settings.diamond_max_iter, settings.diamond_tol
        ),
        starts,
    )
    lower = max(values)
    upper = max(diamond_upper_bound(n1, n2), lower)
    converged = upper - lower <= DIAMOND_GAP_TOL
    if not converged:
        logger.warning(
            "diamond distance not converged: interval [%s, %s]", lower, upper
        )
    return DiamondDistance(lower=lower, upper=upper, converged=converged, value=lower)
