"""Dense complex-matrix substrate: tensor products, partial traces and states.

All matrices are numpy complex128 arrays. Functions never modify their
arguments. States and effects that cross module boundaries are wrapped in the
validated models DensityOperator and PovmElement.
"""

import functools
import logging
import math
import string
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import scipy.linalg
from pydantic import BaseModel, ConfigDict, field_serializer, field_validator
from scipy.special import entr
from scipy.stats import unitary_group

from qavc.constants import (
    ENTROPY_CUTOFF,
    HERMITIAN_INPUT_TOL,
    INEQUALITY_TOL,
    STRUCTURAL_TOL,
)
from qavc.core.errors import DomainError, ShapeError, SizeError
from qavc.settings import get_settings

logger = logging.getLogger(__name__)

CMatrix = npt.NDArray[np.complex128]

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
_PAULIS = (
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)


def check_size(rows: int, cols: int) -> None:
    """Raise a SizeError if a rows x cols matrix would exceed the configured cap."""
    cap = get_settings().max_matrix_entries
    if rows * cols > cap:
        raise SizeError(
            f"a {rows}x{cols} matrix has {rows * cols} entries, above the cap of {cap}"
        )


def as_cmatrix(value: Any) -> CMatrix:
    """Coerce an array or nested lists to a finite complex matrix.

    Nested lists whose innermost level holds [re, im] pairs, the JSON form used
    for channel and code files, are decoded as complex entries.
    """
    arr = np.asarray(value)
    if arr.dtype == object:
        raise ShapeError("ragged matrix")
    if arr.ndim == 3 and arr.shape[-1] == 2 and not np.iscomplexobj(arr):
        arr = arr[..., 0] + 1j * arr[..., 1]
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got an array of shape {arr.shape}")
    arr = np.array(arr, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix has NaN or infinite entries")
    check_size(*arr.shape)
    return arr


def to_pairs(matrix: np.ndarray) -> list:
    """Nested lists of [re, im] pairs, the JSON form of a complex matrix."""
    return np.stack([matrix.real, matrix.imag], axis=-1).tolist()


def dagger(m: np.ndarray) -> CMatrix:
    """Conjugate transpose."""
    return m.conj().T


def hermitian_part(m: np.ndarray) -> CMatrix:
    """(m + m^dag) / 2."""
    return (m + dagger(m)) / 2


def is_hermitian(m: np.ndarray, tol: float = STRUCTURAL_TOL) -> bool:
    """Whether m is square and equal to its adjoint entrywise within tol."""
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(
        np.max(np.abs(m - dagger(m)), initial=0.0) <= tol
    )


def trace_product(a: np.ndarray, b: np.ndarray) -> float:
    """Real part of tr(a b), without forming the product."""
    return float(np.einsum("ij,ji->", a, b).real)


def kron(a: np.ndarray, b: np.ndarray) -> CMatrix:
    """Kronecker (tensor) product a ⊗ b.

    Raises:
        SizeError: If the product would exceed the configured entry cap.
    """
    check_size(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])
    return np.kron(a, b).astype(np.complex128, copy=False)


def kron_all(mats: Sequence[np.ndarray]) -> CMatrix:
    """Tensor product of a non-empty sequence of matrices, left to right."""
    if not mats:
        return np.ones((1, 1), dtype=np.complex128)
    return functools.reduce(kron, mats)


def partial_trace(
    m: np.ndarray, factor_dims: Sequence[int], keep: Sequence[int]
) -> CMatrix:
    """Trace out every tensor factor of m not listed in keep.

    Args:
        m: Square operator on the product of factor_dims.
        factor_dims: Dimensions of the tensor factors, in order.
        keep: Indices of factors to keep; the result keeps their original order.

    Returns:
        The reduced operator. Keeping nothing returns a 1x1 matrix holding tr(m).

    Raises:
        ShapeError: If factor_dims does not match m or keep is out of range.
    """
    dims = [int(d) for d in factor_dims]
    total = math.prod(dims)
    if m.shape != (total, total):
        raise ShapeError(f"factor dims {dims} do not match a {m.shape} operator")
    kept = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in kept):
        raise ShapeError(f"keep={list(keep)} out of range for {len(dims)} factors")
    if len(dims) > len(string.ascii_letters) // 2:
        raise ShapeError(f"too many tensor factors ({len(dims)})")

    rows = string.ascii_letters[: len(dims)]
    cols = "".join(
        rows[i] if i not in kept else string.ascii_letters[len(dims) + i]
        for i in range(len(dims))
    )
    out = "".join(rows[i] for i in kept) + "".join(cols[i] for i in kept)
    reduced = np.einsum(f"{rows}{cols}->{out}", m.reshape(dims + dims))
    kept_dim = math.prod(dims[i] for i in kept)
    return np.asarray(reduced, dtype=np.complex128).reshape(kept_dim, kept_dim)


def eig_hermitian(m: np.ndarray) -> Tuple[np.ndarray, CMatrix]:
    """Eigendecomposition of a Hermitian matrix with reproducible output.

    Eigenvalues are returned in descending order. Each eigenvector is rotated
    so that its first non-negligible component is real and positive.

    Raises:
        ShapeError: If m is not square.
        DomainError: If m is not Hermitian within 1e-8.
    """
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"eigendecomposition needs a square matrix, got {m.shape}")
    if not is_hermitian(m, HERMITIAN_INPUT_TOL):
        raise DomainError("matrix is not Hermitian")
    values, vectors = scipy.linalg.eigh(hermitian_part(m))
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = np.array(vectors[:, order], dtype=np.complex128)
    for k in range(vectors.shape[1]):
        nonzero = np.flatnonzero(np.abs(vectors[:, k]) > 1e-12)
        if nonzero.size:
            lead = vectors[nonzero[0], k]
            vectors[:, k] *= abs(lead) / lead
    return values, vectors


def eigvals_hermitian(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of the Hermitian part of m, ascending."""
    return scipy.linalg.eigvalsh(hermitian_part(m))


def lambda_max(m: np.ndarray) -> float:
    """Largest eigenvalue of the Hermitian part of m."""
    return float(eigvals_hermitian(m)[-1])


def op_leq(a: np.ndarray, b: np.ndarray, tol: float = INEQUALITY_TOL) -> bool:
    """Operator order test a <= b, i.e. the smallest eigenvalue of b - a is >= -tol.

    Raises:
        ShapeError: If a and b differ in shape.
    """
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare {a.shape} with {b.shape}")
    return bool(eigvals_hermitian(b - a)[0] >= -tol)


def trace_norm(m: np.ndarray) -> float:
    """Schatten 1-norm, the sum of singular values."""
    return float(np.sum(scipy.linalg.svdvals(m)))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Von Neumann entropy in bits; eigenvalues below 1e-12 count as zero."""
    values = eigvals_hermitian(rho)
    values = np.where(values < ENTROPY_CUTOFF, 0.0, values)
    return float(np.sum(entr(values)) / math.log(2))


def ket(index: int, dim: int) -> CMatrix:
    """Computational basis column vector |index>."""
    vec = np.zeros((dim, 1), dtype=np.complex128)
    vec[index, 0] = 1
    return vec


def projector(vector: np.ndarray) -> CMatrix:
    """|v><v| for a (not necessarily normalised) vector."""
    vec = np.asarray(vector, dtype=np.complex128).reshape(-1, 1)
    return vec @ dagger(vec)


def subsystem_permutation(dims: Sequence[int], perm: Sequence[int]) -> CMatrix:
    """Permutation matrix reordering tensor factors.

    The returned P maps |x_0 ... x_{n-1}> to |x_{perm[0]} ... x_{perm[n-1]}>,
    i.e. position j of the output holds the old factor perm[j]. The output
    factor dimensions are [dims[p] for p in perm].

    Raises:
        DomainError: If perm is not a bijection of range(len(dims)).
    """
    if sorted(perm) != list(range(len(dims))):
        raise DomainError(f"{list(perm)} is not a permutation of {len(dims)} factors")
    total = math.prod(dims)
    check_size(total, total)
    source = np.arange(total).reshape(list(dims)).transpose(list(perm)).reshape(-1)
    matrix = np.zeros((total, total), dtype=np.complex128)
    matrix[np.arange(total), source] = 1
    return matrix


def pauli_bloch_state(vector: Sequence[float]) -> CMatrix:
    """Qubit density matrix (1 + r.sigma) / 2 for a Bloch vector with |r| <= 1."""
    state = np.eye(2, dtype=np.complex128)
    for component, pauli in zip(vector, _PAULIS):
        state = state + component * pauli
    return state / 2


class DensityOperator(BaseModel):
    """A positive, unit-trace operator: a quantum state."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def coerce_matrix(cls, value: Any) -> CMatrix:
        """Accept arrays, nested lists and [re, im] pair lists."""
        return as_cmatrix(value)

    @field_validator("matrix")
    @classmethod
    def validate_state(cls, matrix: np.ndarray) -> np.ndarray:
        """Check Hermiticity, positivity and unit trace within 1e-10."""
        if not is_hermitian(matrix, STRUCTURAL_TOL):
            raise ValueError("density operator is not Hermitian")
        matrix = hermitian_part(matrix)
        trace = float(np.trace(matrix).real)
        if abs(trace - 1) > STRUCTURAL_TOL:
            raise ValueError(f"density operator has trace {trace}")
        smallest = float(scipy.linalg.eigvalsh(matrix)[0])
        if smallest < -STRUCTURAL_TOL:
            raise ValueError(f"density operator has eigenvalue {smallest}")
        return matrix

    @field_serializer("matrix")
    def serialize_matrix(self, matrix: np.ndarray) -> list:
        """Complex entries as [re, im] pairs."""
        return to_pairs(matrix)

    @property
    def dim(self) -> int:
        """Hilbert-space dimension."""
        return int(self.matrix.shape[0])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "DensityOperator":
        """The pure state of a vector, normalised first."""
        vec = np.asarray(vector, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise DomainError("zero vector has no state")
        return cls(matrix=projector(vec / norm))

    @classmethod
    def from_unnormalized(cls, matrix: np.ndarray) -> "DensityOperator":
        """Symmetrise and rescale a positive matrix to unit trace."""
        herm = hermitian_part(np.asarray(matrix, dtype=np.complex128))
        trace = float(np.trace(herm).real)
        if trace <= 0:
            raise DomainError(f"cannot normalise an operator of trace {trace}")
        return cls(matrix=herm / trace)


class PovmElement(BaseModel):
    """An effect 0 <= D <= 1."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray

    @field_validator("matrix", mode="before")
    @classmethod
    def coerce_matrix(cls, value: Any) -> CMatrix:
        """Accept arrays, nested lists and [re, im] pair lists."""
        return as_cmatrix(value)

    @field_validator("matrix")
    @classmethod
    def validate_effect(cls, matrix: np.ndarray) -> np.ndarray:
        """Check Hermiticity and 0 <= eigenvalues <= 1 + 1e-10."""
        if not is_hermitian(matrix, STRUCTURAL_TOL):
            raise ValueError("POVM element is not Hermitian")
        matrix = hermitian_part(matrix)
        values = scipy.linalg.eigvalsh(matrix)
        if values[0] < -STRUCTURAL_TOL or values[-1] > 1 + STRUCTURAL_TOL:
            raise ValueError(
                f"POVM element spectrum [{values[0]}, {values[-1]}] not in [0, 1]"
            )
        return matrix

    @field_serializer("matrix")
    def serialize_matrix(self, matrix: np.ndarray) -> list:
        """Complex entries as [re, im] pairs."""
        return to_pairs(matrix)

    @property
    def dim(self) -> int:
        """Hilbert-space dimension."""
        return int(self.matrix.shape[0])


def max_entangled(L: int) -> DensityOperator:  # pylint: disable=invalid-name
    """The maximally entangled state Phi_L = (1/L) sum_ij |ii><jj| on L x L.

    Raises:
        DomainError: If L < 1.
    """
    if L < 1:
        raise DomainError(f"maximally entangled state needs L >= 1, got {L}")
    vec = np.zeros(L * L, dtype=np.complex128)
    vec[np.arange(L) * (L + 1)] = 1 / math.sqrt(L)
    return DensityOperator(matrix=projector(vec))


def maximally_mixed(dim: int) -> DensityOperator:
    """1 / dim."""
    return DensityOperator(matrix=np.eye(dim, dtype=np.complex128) / dim)


def basis_state(index: int, dim: int) -> DensityOperator:
    """|index><index|."""
    return DensityOperator(matrix=projector(ket(index, dim)))


def tensor_states(states: Sequence[DensityOperator]) -> DensityOperator:
    """sigma_1 ⊗ ... ⊗ sigma_n."""
    return DensityOperator.from_unnormalized(kron_all([s.matrix for s in states]))


def tensor_power_state(state: DensityOperator, ell: int) -> DensityOperator:
    """sigma^{⊗ ell}."""
    return tensor_states([state] * ell)


def random_pure_vector(dim: int, rng: np.random.Generator) -> CMatrix:
    """Haar-random unit vector."""
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return (vec / np.linalg.norm(vec)).astype(np.complex128)


def random_density(
    dim: int, rng: np.random.Generator, rank: Optional[int] = None
) -> DensityOperator:
    """Random state from the induced (Ginibre) measure; rank 1 gives pure states."""
    rank = dim if rank is None else rank
    ginibre = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    return DensityOperator.from_unnormalized(ginibre @ dagger(ginibre))


def random_unitary(dim: int, rng: np.random.Generator) -> CMatrix:
    """Haar-random unitary."""
    if dim == 1:
        return np.ones((1, 1), dtype=np.complex128)
    return np.asarray(unitary_group.rvs(dim, random_state=rng), dtype=np.complex128)


def random_hermitian(dim: int, rng: np.random.Generator) -> CMatrix:
    """Hermitian matrix with Gaussian entries."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return hermitian_part(g)


def density_from_params(params: np.ndarray, dim: int) -> CMatrix:
    """Map 2*dim**2 real parameters onto a state, rho = T T^dag / tr(T T^dag).

    The map is smooth and onto the state space, so unconstrained optimisers can
    search over states. The all-zero vector maps to the maximally mixed state.
    """
    params = np.asarray(params, dtype=float)
    half = dim * dim
    t = (params[:half] + 1j * params[half:]).reshape(dim, dim)
    rho = t @ dagger(t)
    trace = float(np.trace(rho).real)
    if trace <= 1e-300:
        return np.eye(dim, dtype=np.complex128) / dim
    return rho / trace


def params_from_density(rho: np.ndarray) -> np.ndarray:
    """A preimage of rho under density_from_params."""
    values, vectors = scipy.linalg.eigh(hermitian_part(rho))
    t = vectors * np.sqrt(np.clip(values, 0, None))
    flat = t.reshape(-1)
    return np.concatenate([flat.real, flat.imag])


def _fibonacci_sphere(count: int) -> List[Tuple[float, float, float]]:
    points = []
    for i in range(count):
        z = 1 - 2 * (i + 0.5) / count
        r = math.sqrt(max(0.0, 1 - z * z))
        phi = i * _GOLDEN_ANGLE
        points.append((r * math.cos(phi), r * math.sin(phi), z))
    return points


def state_grid(dim: int, points: int, seed: int = 0) -> List[DensityOperator]:
    """A deterministic spread of states used to start searches over S(J).

    The grid always holds the maximally mixed state and the basis states. For
    qubits the rest are Fibonacci-sphere points on the Bloch sphere and on two
    interior shells; otherwise seeded random pure and mixed states.

    Args:
        dim: Dimension of J.
        points: Requested number of states (at least dim + 1 are returned).
        seed: Seed for the random part (ignored for qubits).
    """
    grid = [maximally_mixed(dim)] + [basis_state(j, dim) for j in range(dim)]
    remaining = max(0, points - len(grid))
    if dim == 1 or remaining == 0:
        return grid
    if dim == 2:
        surface = math.ceil(0.6 * remaining)
        inner = remaining - surface
        shells = [(1.0, surface), (2 / 3, inner - inner // 2), (1 / 3, inner // 2)]
        for radius, count in shells:
            for x, y, z in _fibonacci_sphere(count):
                grid.append(
                    DensityOperator(
                        matrix=pauli_bloch_state((radius * x, radius * y, radius * z))
                    )
                )
        return grid
    rng = np.random.default_rng(seed)
    for i in range(remaining):
        rank = 1 if i % 2 == 0 else dim
        grid.append(random_density(dim, rng, rank=rank))
    return grid


def integer_root(total: int, ell: int) -> int:
    """The local dimension d with d**ell == total.

    Raises:
        ShapeError: If total is not a perfect ell-th power.
    """
    root = round(total ** (1 / ell))
    for candidate in (root - 1, root, root + 1):
        if candidate >= 1 and candidate**ell == total:
            return candidate
    raise ShapeError(f"{total} is not a perfect {ell}-th power")
