"""Codes, their errors against arbitrary jammer states and the error observables.

Every error functional is affine in the jammer state zeta on J^l, so it is the
expectation of an observable: p_err(c, n, zeta) = tr(zeta E) and
infidelity(q, n, zeta) = tr(zeta G). The worst case over all (possibly
entangled) jammer states is therefore the largest eigenvalue of E, or of the
weighted mean of the E_lambda for a random code.
"""

import itertools
import logging
import math
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from qavc.constants import INEQUALITY_TOL, STRUCTURAL_TOL
from qavc.core import channel as ch
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.errors import DomainError, ShapeError
from qavc.core.qmath import CMatrix, DensityOperator, PovmElement
from qavc.utils import ordered_map

logger = logging.getLogger(__name__)


class ClassicalCode(BaseModel):
    """Message states rho_m on A^l and a decoding POVM {D_m} on B^l."""

    model_config = ConfigDict(frozen=True)

    ell: int
    states: List[DensityOperator]
    povm: List[PovmElement]

    @model_validator(mode="after")
    def check_code(self) -> "ClassicalCode":
        """One POVM element per message, consistent dims and sum_m D_m = 1."""
        if self.ell < 1:
            raise ValueError(f"block length must be >= 1, got {self.ell}")
        if not self.states or len(self.states) != len(self.povm):
            raise ValueError(
                f"{len(self.states)} message states but {len(self.povm)} POVM elements"
            )
        state_dims = {s.dim for s in self.states}
        if len(state_dims) != 1 or len({d.dim for d in self.povm}) != 1:
            raise ShapeError("message states or POVM elements differ in dimension")
        total = sum(d.matrix for d in self.povm)
        if np.max(np.abs(total - np.eye(self.povm[0].dim))) > 1e-9:
            raise ValueError("POVM elements do not sum to the identity")
        return self

    @property
    def messages(self) -> int:
        """Number of messages M."""
        return len(self.states)

    @property
    def rate(self) -> float:
        """log2(M) / l bits per channel use."""
        return math.log2(self.messages) / self.ell


class QuantumCode(BaseModel):
    """An encoder from C^L into A^l and a decoder from B^l back to C^L."""

    model_config = ConfigDict(frozen=True)

    ell: int
    encoder: Channel
    decoder: Channel

    @model_validator(mode="after")
    def check_code(self) -> "QuantumCode":
        """The decoder must land where the encoder starts."""
        if self.ell < 1:
            raise ValueError(f"block length must be >= 1, got {self.ell}")
        if self.encoder.in_total != self.decoder.out_total:
            raise ShapeError(
                f"encoder takes dim {self.encoder.in_total} "
                f"but decoder returns dim {self.decoder.out_total}"
            )
        return self

    @property
    def L(self) -> int:  # pylint: disable=invalid-name
        """Dimension of the encoded system."""
        return self.encoder.in_total

    @property
    def rate(self) -> float:
        """log2(L) / l qubits per channel use."""
        return math.log2(self.L) / self.ell


Code = Union[ClassicalCode, QuantumCode]


class RandomCode(BaseModel):
    """A probability distribution over deterministic code variants."""

    model_config = ConfigDict(frozen=True)

    weights: List[float]
    variants: List[Union[ClassicalCode, QuantumCode]]
    labels: Optional[List[str]] = None
    # Set when the variants are a Monte Carlo sample rather than an enumeration
    sampled: bool = False

    @model_validator(mode="after")
    def check_family(self) -> "RandomCode":
        """Weights form a distribution and all variants share kind and shape."""
        if not self.variants:
            raise DomainError("a random code needs at least one variant")
        if len(self.weights) != len(self.variants):
            raise ValueError(
                f"{len(self.weights)} weights for {len(self.variants)} variants"
            )
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1) > 1e-12:
            raise ValueError("weights are not a probability distribution")
        if self.labels is not None and len(self.labels) != len(self.variants):
            raise ValueError("one label per variant is required")
        if len({_code_shape(v) for v in self.variants}) != 1:
            raise ShapeError("variants differ in kind, block length or size")
        return self

    @property
    def ell(self) -> int:
        """Common block length."""
        return self.variants[0].ell

    @classmethod
    def deterministic(cls, code: Code) -> "RandomCode":
        """The random code that always uses code."""
        return cls(weights=[1.0], variants=[code])

    @classmethod
    def uniform(
        cls,
        variants: Sequence[Code],
        labels: Optional[List[str]] = None,
        sampled: bool = False,
    ) -> "RandomCode":
        """Equal weights over variants."""
        count = len(variants)
        if count == 0:
            raise DomainError("a random code needs at least one variant")
        return cls(
            weights=[1.0 / count] * count,
            variants=list(variants),
            labels=labels,
            sampled=sampled,
        )


class ErrorObservable(BaseModel):
    """The effect E on J^l whose expectation is the error of a code."""

    model_config = ConfigDict(frozen=True)

    dim: int
    matrix: PovmElement

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "ErrorObservable":
        """Wrap a computed observable, checking 0 <= E <= 1 within 1e-8."""
        herm = qmath.hermitian_part(matrix)
        values = qmath.eigvals_hermitian(herm)
        if values[0] < -INEQUALITY_TOL or values[-1] > 1 + INEQUALITY_TOL:
            raise DomainError(f"error observable spectrum [{values[0]}, {values[-1]}]")
        if values[0] < -STRUCTURAL_TOL or values[-1] > 1 + STRUCTURAL_TOL:
            vals, vecs = qmath.eig_hermitian(herm)
            herm = (vecs * np.clip(vals, 0, 1)) @ qmath.dagger(vecs)
        return cls(dim=herm.shape[0], matrix=PovmElement(matrix=herm))

    def expectation(self, zeta: DensityOperator) -> float:
        """tr(zeta E)."""
        if zeta.dim != self.dim:
            raise ShapeError(
                f"jammer state of dim {zeta.dim} on an observable of dim {self.dim}"
            )
        return qmath.trace_product(zeta.matrix, self.matrix.matrix)


class WorstCase(BaseModel):
    """Largest error over all jammer states and a state achieving it."""

    model_config = ConfigDict(frozen=True)

    value: float
    witness: DensityOperator


def _code_shape(code: Code) -> tuple:
    if isinstance(code, ClassicalCode):
        in_dim, out_dim = code.states[0].dim, code.povm[0].dim
        return ("classical", code.ell, code.messages, in_dim, out_dim)
    return ("quantum", code.ell, code.L, code.encoder.out_total, code.decoder.in_total)


def _block_dims(n: Channel, ell: int) -> tuple:
    if len(n.in_dims) != 2:
        raise ShapeError(
            f"expected a channel with input factors (A, J), got {n.in_dims}"
        )
    adim, jdim = n.in_dims
    return adim**ell, jdim**ell, n.out_total**ell


def _check_classical(c: ClassicalCode, n: Channel) -> tuple:
    a_tot, j_tot, b_tot = _block_dims(n, c.ell)
    if c.states[0].dim != a_tot or c.povm[0].dim != b_tot:
        raise ShapeError(
            f"code on {c.states[0].dim} -> {c.povm[0].dim} does not fit a channel "
            f"block {a_tot} -> {b_tot}"
        )
    return a_tot, j_tot, b_tot


def _check_quantum(q: QuantumCode, n: Channel) -> tuple:
    a_tot, j_tot, b_tot = _block_dims(n, q.ell)
    if q.encoder.out_total != a_tot or q.decoder.in_total != b_tot:
        raise ShapeError(
            f"code on {q.encoder.out_total} -> {q.decoder.in_total} does not fit "
            f"a channel block {a_tot} -> {b_tot}"
        )
    return a_tot, j_tot, b_tot


def _check_zeta(zeta: DensityOperator, j_tot: int) -> None:
    if zeta.dim != j_tot:
        raise ShapeError(f"jammer state of dim {zeta.dim}, expected {j_tot}")


def p_err(c: ClassicalCode, n: Channel, zeta: DensityOperator) -> float:
    """Average error probability (1/M) sum_m tr(N^{⊗l}(rho_m ⊗ zeta)(1 - D_m)).

    Raises:
        ShapeError: If the code, channel and jammer state do not fit together.
    """
    _, j_tot, _ = _check_classical(c, n)
    _check_zeta(zeta, j_tot)
    power = ch.tensor_power(n, c.ell)
    total = 0.0
    for state, effect in zip(c.states, c.povm):
        out = ch.apply_operator(power, qmath.kron(state.matrix, zeta.matrix))
        total += 1 - qmath.trace_product(out, effect.matrix)
    return total / c.messages


def infidelity(q: QuantumCode, n: Channel, zeta: DensityOperator) -> float:
    """1 - <Phi_L| (id ⊗ D ∘ N^{⊗l}_zeta ∘ E)(Phi_L) |Phi_L>.

    Raises:
        ShapeError: If the code, channel and jammer state do not fit together.
    """
    _, j_tot, _ = _check_quantum(q, n)
    _check_zeta(zeta, j_tot)
    fixed = ch.fix_jammer(ch.tensor_power(n, q.ell), zeta)
    effective = ch.compose(q.decoder, ch.compose(fixed, q.encoder))
    phi = qmath.max_entangled(q.L)
    fidelity = qmath.trace_product(ch.choi_matrix(effective) / q.L, phi.matrix)
    return 1 - fidelity


def error_observable(c: ClassicalCode, n: Channel) -> ErrorObservable:
    """E = (1/M) sum_m tr_{A^l}((rho_m ⊗ 1) N*^{⊗l}(1 - D_m)).

    Raises:
        ShapeError: If the code does not fit the channel.
    """
    a_tot, j_tot, b_tot = _check_classical(c, n)
    power = ch.tensor_power(n, c.ell)
    eye_b = np.eye(b_tot, dtype=np.complex128)
    eye_j = np.eye(j_tot, dtype=np.complex128)

    def _term(m: int) -> CMatrix:
        heisenberg = ch.adjoint_operator(power, eye_b - c.povm[m].matrix)
        weighted = qmath.kron(c.states[m].matrix, eye_j) @ heisenberg
        return qmath.partial_trace(weighted, [a_tot, j_tot], keep=[1])

    terms = ordered_map(_term, range(c.messages))
    return ErrorObservable.from_matrix(sum(terms) / c.messages)


def infidelity_observable(q: QuantumCode, n: Channel) -> ErrorObservable:
    """G = tr_{R A^l}((tau ⊗ 1)(id ⊗ N*^{⊗l} ∘ D*)(1 - Phi_L)).

    Here tau = (id ⊗ E)(Phi_L) is the encoded half of the maximally entangled state.

    Raises:
        ShapeError: If the code does not fit the channel.
    """
    _, j_tot, _ = _check_quantum(q, n)
    power = ch.tensor_power(n, q.ell)
    phi = qmath.max_entangled(q.L).matrix
    dim_l = q.L
    complement = np.eye(dim_l * dim_l, dtype=np.complex128) - phi
    decoder = ch.extend(q.decoder, left=dim_l, right=1)
    after_decoder = ch.adjoint_operator(decoder, complement)
    after_channel = ch.adjoint_operator(
        ch.extend(power, left=dim_l, right=1), after_decoder
    )
    tau = ch.apply_operator(ch.extend(q.encoder, left=dim_l, right=1), phi)
    weighted = qmath.kron(tau, np.eye(j_tot, dtype=np.complex128)) @ after_channel
    ref_dim = tau.shape[0]
    reduced = qmath.partial_trace(weighted, [ref_dim, j_tot], keep=[1])
    return ErrorObservable.from_matrix(reduced)


def observable(code: Code, n: Channel) -> ErrorObservable:
    """E for a classical code, G for a quantum code."""
    if isinstance(code, ClassicalCode):
        return error_observable(code, n)
    return infidelity_observable(code, n)


def error_value(code: Code, n: Channel, zeta: DensityOperator) -> float:
    """p_err for a classical code, infidelity for a quantum code."""
    if isinstance(code, ClassicalCode):
        return p_err(code, n, zeta)
    return infidelity(code, n, zeta)


def mean_observable(
    rc: RandomCode, n: Channel, observables: Optional[Sequence[ErrorObservable]] = None
) -> CMatrix:
    """Weighted mean sum_lambda w_lambda E_lambda of the variants' observables."""
    if not rc.variants:
        raise DomainError("empty code family")
    if observables is None:
        observables = ordered_map(lambda v: observable(v, n), rc.variants)
    total = np.zeros_like(observables[0].matrix.matrix)
    for weight, obs in zip(rc.weights, observables):
        total = total + weight * obs.matrix.matrix
    return total


def expected_error(rc: RandomCode, n: Channel, zeta: DensityOperator) -> float:
    """E_lambda of the variants' errors at zeta, each evaluated directly."""
    values = ordered_map(lambda v: error_value(v, n, zeta), rc.variants)
    return float(sum(w * v for w, v in zip(rc.weights, values)))


def worst_case_error(rc: RandomCode, n: Channel) -> WorstCase:
    """sup over jammer states of the expected error, with an optimal jammer state.

    The supremum over all states of J^l is the top eigenvalue of the mean
    observable; the witness is the projector onto its top eigenvector.

    Raises:
        DomainError: If the family is empty.
    """
    values, vectors = qmath.eig_hermitian(mean_observable(rc, n))
    return WorstCase(
        value=float(values[0]), witness=DensityOperator.from_vector(vectors[:, 0])
    )


def _basis_povm(
    dims: Sequence[int], decode: Callable[[tuple], int]
) -> List[CMatrix]:
    """Projective measurement in the product basis, outcome decode(y) per string y."""
    total = math.prod(dims)
    elements: dict = {}
    for index, y in enumerate(itertools.product(*[range(d) for d in dims])):
        elements.setdefault(decode(y), np.zeros((total, total), dtype=np.complex128))
        elements[decode(y)][index, index] = 1
    return [elements[key] for key in sorted(elements)]


def basis_code(adim: int, bdim: int, ell: int = 1) -> ClassicalCode:
    """Send strings over the first min(|A|, |B|) basis letters, measure in the basis.

    Output letters that no message uses are read as letter 0.
    """
    letters = min(adim, bdim)
    words = list(itertools.product(range(letters), repeat=ell))
    states = [
        DensityOperator(matrix=qmath.projector(_basis_ket(word, adim)))
        for word in words
    ]

    def _decode(y: tuple) -> tuple:
        return tuple(v if v < letters else 0 for v in y)

    povm = [PovmElement(matrix=m) for m in _basis_povm([bdim] * ell, _decode)]
    return ClassicalCode(ell=ell, states=states, povm=povm)


def pair_parity_code(ell: int) -> ClassicalCode:
    """One bit carried by whether the first two qubits agree.

    Message 0 is |00..0>, message 1 is |01 0..0>; the decoder reports whether
    the first two output bits differ. Flipping both bits, or every bit, leaves
    the message intact.

    Raises:
        DomainError: If ell < 2.
    """
    if ell < 2:
        raise DomainError(f"the pair-parity code needs ell >= 2, got {ell}")
    zeros = (0,) * ell
    one = (0, 1) + (0,) * (ell - 2)
    states = [
        DensityOperator(matrix=qmath.projector(_basis_ket(w, 2))) for w in (zeros, one)
    ]
    parity = _basis_povm([2] * ell, lambda y: int(y[0] != y[1]))
    povm = [PovmElement(matrix=m) for m in parity]
    return ClassicalCode(ell=ell, states=states, povm=povm)


def _basis_ket(word: Sequence[int], dim: int) -> CMatrix:
    index = 0
    for letter in word:
        index = index * dim + letter
    return qmath.ket(index, dim ** len(word))


def identity_quantum_code(dim: int, ell: int = 1) -> QuantumCode:
    """Encode C^{dim^l} directly into A^l and read it back unchanged."""
    total = dim**ell
    eye = np.eye(total, dtype=np.complex128)
    return QuantumCode(
        ell=ell,
        encoder=Channel(in_dims=[total], out_dims=[dim] * ell, kraus=[eye]),
        decoder=Channel(in_dims=[dim] * ell, out_dims=[total], kraus=[eye]),
    )


def repetition_code(ell: int) -> QuantumCode:
    """The bit-flip repetition code on an odd number of qubits, majority-vote decoded.

    |0> -> |0..0>, |1> -> |1..1>. The decoder has one Kraus operator per error
    pattern e of weight at most ell // 2, |0><e| + |1><e ⊕ 1..1|.

    Raises:
        DomainError: If ell is even.
    """
    if ell % 2 == 0:
        raise DomainError(f"the repetition code needs an odd block length, got {ell}")
    total = 2**ell
    encoder = np.zeros((total, 2), dtype=np.complex128)
    encoder[0, 0] = 1
    encoder[total - 1, 1] = 1
    kraus = []
    for e in range(total):
        if bin(e).count("1") <= ell // 2:
            op = np.zeros((2, total), dtype=np.complex128)
            op[0, e] = 1
            op[1, e ^ (total - 1)] = 1
            kraus.append(op)
    return QuantumCode(
        ell=ell,
        encoder=Channel(in_dims=[2], out_dims=[2] * ell, kraus=[encoder]),
        decoder=Channel(in_dims=[2] * ell, out_dims=[2], kraus=kraus),
    )
