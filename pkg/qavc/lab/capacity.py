"""Finite-block maximin estimates of the random-code capacities.

For a block length l the classical estimate is

    (1/l) max over ensembles {p_x, rho_x} of inf over sigma of I(X : B^l)

with outputs N^{⊗l}(rho_x ⊗ sigma^{⊗l}), and the quantum estimate replaces the
Holevo information by the coherent information of a purified input. The inner
infimum is taken by grid search refined with L-BFGS-B; the outer maximum by an
exchange method whose subproblems are solved with SLSQP. Entropies are in bits.
"""

import itertools
import logging
import math
from typing import Callable, List, Optional, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    field_serializer,
    field_validator,
    model_validator,
)
from scipy.optimize import minimize, minimize_scalar
from scipy.special import rel_entr, softmax

from qavc.core import channel as ch
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.errors import DomainError, ShapeError
from qavc.core.qmath import CMatrix, DensityOperator
from qavc.utils import make_rng, ordered_map, timed

logger = logging.getLogger(__name__)


class Ensemble(BaseModel):
    """Input states rho_x used with probabilities p_x."""

    model_config = ConfigDict(frozen=True)

    probs: List[float]
    states: List[DensityOperator]

    @model_validator(mode="after")
    def check_ensemble(self) -> "Ensemble":
        """probs is a distribution with one entry per state."""
        if not self.states or len(self.probs) != len(self.states):
            raise ValueError(
                f"{len(self.probs)} probabilities for {len(self.states)} states"
            )
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > 1e-9:
            raise ValueError("ensemble probabilities are not a distribution")
        return self


class PureInput(BaseModel):
    """A unit vector on R ⊗ A^l."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vector: np.ndarray
    ref_dim: int

    @field_validator("vector", mode="before")
    @classmethod
    def coerce_vector(cls, value: object) -> np.ndarray:
        """Accept complex arrays or lists of [re, im] pairs."""
        arr = np.asarray(value)
        if arr.ndim == 2 and arr.shape[-1] == 2 and not np.iscomplexobj(arr):
            arr = arr[:, 0] + 1j * arr[:, 1]
        return np.asarray(arr, dtype=np.complex128).reshape(-1)

    @field_validator("vector")
    @classmethod
    def check_norm(cls, vector: np.ndarray) -> np.ndarray:
        """Unit norm within 1e-12."""
        if abs(np.linalg.norm(vector) - 1) > 1e-12:
            raise ValueError("pure input is not a unit vector")
        return vector

    @field_serializer("vector")
    def serialize_vector(self, vector: np.ndarray) -> list:
        """Complex entries as [re, im] pairs."""
        return np.stack([vector.real, vector.imag], axis=-1).tolist()

    @classmethod
    def normalized(cls, vector: np.ndarray, ref_dim: int) -> "PureInput":
        """Normalise vector first."""
        vec = np.asarray(vector, dtype=np.complex128).reshape(-1)
        return cls(vector=vec / np.linalg.norm(vec), ref_dim=ref_dim)


class OptimizerConfig(BaseModel):
    """Knobs of the maximin search."""

    restarts: int = 3  # outer starts, deterministic ones included
    grid_points: int = 200  # sigma grid of the inner infimum
    descent_starts: int = 3  # grid minima refined by local descent
    exchange_iters: int = 8  # rounds of the exchange method per start
    outer_max_iter: int = 200  # SLSQP iterations per round
    tol: float = 1e-7
    ensemble_size: Optional[int] = None  # default |A|^l
    seed: int = 0

    @field_validator("restarts", "grid_points", "descent_starts", "exchange_iters")
    @classmethod
    def validate_positive(cls, value: int) -> int:
        """Counts must be at least one."""
        if value < 1:
            raise ValueError(f"expected a positive integer, got {value}")
        return value


class OptimizerStep(BaseModel):
    """One round of the exchange method."""

    restart: int
    iteration: int
    active_set: int
    outer_value: float
    certified_value: float


class InnerResult(BaseModel):
    """Infimum of an objective over jammer states."""

    value: float
    sigma: DensityOperator
    grid_value: float
    spread: float


class CapacityEstimate(BaseModel):
    """A certified finite-block maximin value in bits per channel use."""

    kind: str
    ell: int
    value_bits_per_use: float
    reported_value: float
    argmax: Union[Ensemble, PureInput]
    arginf: DensityOperator
    grid_gap: float
    spread: float
    optimizer_trace: List[OptimizerStep]


def holevo_info(e: Ensemble, channel: Channel) -> float:
    """S(sum_x p_x N(rho_x)) - sum_x p_x S(N(rho_x)) in bits.

    Raises:
        ShapeError: If the ensemble does not live on the channel input.
    """
    outputs = [ch.apply_operator(channel, s.matrix) for s in e.states]
    return _holevo(e.probs, outputs)


def _holevo(probs: List[float], outputs: List[CMatrix]) -> float:
    average = sum(p * w for p, w in zip(probs, outputs))
    return qmath.von_neumann_entropy(average) - sum(
        p * qmath.von_neumann_entropy(w) for p, w in zip(probs, outputs) if p > 0
    )


def coherent_info(phi: PureInput, channel: Channel) -> float:
    """S(Omega_B) - S(Omega_RB) for Omega = (id_R ⊗ N)(|phi><phi|), in bits.

    Raises:
        ShapeError: If phi does not live on R ⊗ input.
    """
    if phi.vector.size != phi.ref_dim * channel.in_total:
        raise ShapeError(
            f"pure input of size {phi.vector.size} for reference {phi.ref_dim} "
            f"and channel input {channel.in_total}"
        )
    lifted = ch.extend(channel, left=phi.ref_dim, right=1)
    rho = qmath.projector(phi.vector)
    return _coherent(lifted, phi.ref_dim, channel.out_total, rho)


def _coherent(lifted: Channel, ref_dim: int, out_dim: int, state: CMatrix) -> float:
    omega = ch.apply_operator(lifted, state)
    reduced = qmath.partial_trace(omega, [ref_dim, out_dim], keep=[1])
    return qmath.von_neumann_entropy(reduced) - qmath.von_neumann_entropy(omega)


def holevo_at(e: Ensemble, n: Channel, sigma: DensityOperator, ell: int) -> float:
    """Holevo information of the ensemble through N^{⊗l}_{sigma^{⊗l}}."""
    fixed = ch.fix_jammer(ch.tensor_power(n, ell), qmath.tensor_power_state(sigma, ell))
    return holevo_info(e, fixed)


def coherent_at(phi: PureInput, n: Channel, sigma: DensityOperator, ell: int) -> float:
    """Coherent information of phi through N^{⊗l}_{sigma^{⊗l}}."""
    fixed = ch.fix_jammer(ch.tensor_power(n, ell), qmath.tensor_power_state(sigma, ell))
    return coherent_info(phi, fixed)


def inner_infimum(
    objective: Callable[[CMatrix], float],
    jdim: int,
    grid_points: int = 200,
    starts: int = 3,
    seed: int = 0,
) -> InnerResult:
    """inf over states sigma of objective(sigma), by grid search plus L-BFGS-B.

    The descent starts from the best grid points, so the value never exceeds
    the grid minimum. spread is the range of the local minima found.
    """
    grid = qmath.state_grid(jdim, grid_points, seed)
    values = ordered_map(lambda s: objective(s.matrix), grid)
    order = np.argsort(values, kind="stable")
    grid_value = float(values[order[0]])
    best_value, best_sigma = grid_value, grid[int(order[0])].matrix

    def _objective(x: np.ndarray) -> float:
        return objective(qmath.density_from_params(x, jdim))

    local = []
    for index in order[:starts]:
        x0 = qmath.params_from_density(grid[int(index)].matrix)
        result = minimize(_objective, x0, method="L-BFGS-B")
        local.append(float(result.fun))
        if result.fun < best_value:
            best_value = float(result.fun)
            best_sigma = qmath.density_from_params(result.x, jdim)
    return InnerResult(
        value=best_value,
        sigma=DensityOperator.from_unnormalized(best_sigma),
        grid_value=grid_value,
        spread=max(local) - min(local),
    )


class _Problem:
    """Parametrised outer variable and objective of one maximin problem."""

    def __init__(self, kind: str, n: Channel, ell: int, cfg: OptimizerConfig):
        if len(n.in_dims) != 2:
            raise ShapeError(
                f"expected a channel with input factors (A, J), got {n.in_dims}"
            )
        self.kind = kind
        self.ell = ell
        self.jdim = n.in_dims[1]
        self.power = ch.tensor_power(n, ell)
        self.a_tot = n.in_dims[0] ** ell
        self.b_tot = n.out_total**ell
        self.size = cfg.ensemble_size or self.a_tot
        if kind == "Q":
            self.lifted = ch.extend(self.power, left=self.a_tot, right=1)

    @property
    def n_params(self) -> int:
        if self.kind == "C":
            return self.size + self.size * 2 * self.a_tot
        return 2 * self.a_tot * self.a_tot

    def _vectors(self, x: np.ndarray) -> List[np.ndarray]:
        raw = x[self.size :].reshape(self.size, 2 * self.a_tot)
        vecs = raw[:, : self.a_tot] + 1j * raw[:, self.a_tot :]
        return [v / max(np.linalg.norm(v), 1e-300) for v in vecs]

    def value(self, x: np.ndarray, jam: CMatrix) -> float:
        """Objective at parameters x against the block jammer state jam."""
        if self.kind == "C":
            probs = list(softmax(x[: self.size]))
            outputs = [
                ch.apply_operator(self.power, qmath.kron(qmath.projector(v), jam))
                for v in self._vectors(x)
            ]
            return _holevo(probs, outputs)
        half = self.a_tot * self.a_tot
        vec = x[:half] + 1j * x[half:]
        vec = vec / max(np.linalg.norm(vec), 1e-300)
        state = qmath.kron(qmath.projector(vec), jam)
        return _coherent(self.lifted, self.a_tot, self.b_tot, state)

    def at_sigma(self, x: np.ndarray, sigma: CMatrix) -> float:
        return self.value(x, qmath.kron_all([sigma] * self.ell))

    def starts(self, restarts: int, seed: int) -> List[np.ndarray]:
        """Deterministic starts first, then seeded random ones."""
        fixed = []
        if self.kind == "C":
            eye = np.eye(self.a_tot)
            fourier = np.fft.fft(np.eye(self.a_tot)) / math.sqrt(self.a_tot)
            for basis in (eye, fourier):
                vecs = [basis[:, i % self.a_tot] for i in range(self.size)]
                flat = np.concatenate([np.concatenate([v.real, v.imag]) for v in vecs])
                fixed.append(np.concatenate([np.zeros(self.size), flat]))
        else:
            phi = np.zeros(self.a_tot * self.a_tot, dtype=np.complex128)
            phi[np.arange(self.a_tot) * (self.a_tot + 1)] = 1 / math.sqrt(self.a_tot)
            fixed.append(np.concatenate([phi.real, phi.imag]))
        randoms = [
            make_rng(seed, r).standard_normal(self.n_params)
            for r in range(max(0, restarts - len(fixed)))
        ]
        return (fixed + randoms)[: max(restarts, 1)]

    def argmax(self, x: np.ndarray) -> Union[Ensemble, PureInput]:
        if self.kind == "C":
            probs = softmax(x[: self.size])
            return Ensemble(
                probs=list(probs / probs.sum()),
                states=[DensityOperator.from_vector(v) for v in self._vectors(x)],
            )
        half = self.a_tot * self.a_tot
        return PureInput.normalized(x[:half] + 1j * x[half:], self.a_tot)


def _maximin(kind: str, n: Channel, ell: int, cfg: OptimizerConfig) -> CapacityEstimate:
    problem = _Problem(kind, n, ell, cfg)
    trace: List[OptimizerStep] = []

    def _inner(x: np.ndarray, points: int) -> InnerResult:
        return inner_infimum(
            lambda s: problem.at_sigma(x, s),
            problem.jdim,
            grid_points=points,
            starts=cfg.descent_starts,
            seed=cfg.seed,
        )

    certified_per_start = []
    best = None
    for restart, x in enumerate(problem.starts(cfg.restarts, cfg.seed)):
        inner = _inner(x, cfg.grid_points)
        start_best = (inner.value, x, inner)
        active = [inner.sigma.matrix]
        for iteration in range(cfg.exchange_iters):
            x, outer_value = _solve_outer(problem, x, active, cfg)
            inner = _inner(x, cfg.grid_points)
            trace.append(
                OptimizerStep(
                    restart=restart,
                    iteration=iteration,
                    active_set=len(active),
                    outer_value=outer_value,
                    certified_value=inner.value,
                )
            )
            if inner.value > start_best[0]:
                start_best = (inner.value, x, inner)
            if outer_value - inner.value <= cfg.tol:
                break
            active.append(inner.sigma.matrix)
        certified_per_start.append(start_best[0])
        if best is None or start_best[0] > best[0]:
            best = start_best
        logger.debug("restart %s certified %s", restart, start_best[0])

    assert best is not None
    value, x_best, inner_best = best
    fine = _inner(x_best, 10 * cfg.grid_points)
    per_use = value / ell
    return CapacityEstimate(
        kind=kind,
        ell=ell,
        value_bits_per_use=per_use,
        reported_value=max(per_use, 0.0),
        argmax=problem.argmax(x_best),
        arginf=inner_best.sigma,
        grid_gap=max(0.0, value - fine.value),
        spread=max(certified_per_start) - min(certified_per_start),
        optimizer_trace=trace,
    )


def _solve_outer(
    problem: _Problem, x0: np.ndarray, active: List[CMatrix], cfg: OptimizerConfig
) -> tuple:
    """max_x min_k f(x, sigma_k) as: maximise t subject to f(x, sigma_k) >= t."""
    jams = [qmath.kron_all([s] * problem.ell) for s in active]
    t0 = min(problem.value(x0, jam) for jam in jams)
    z0 = np.concatenate([x0, [t0]])
    constraints = [
        {"type": "ineq", "fun": (lambda z, jam=jam: problem.value(z[:-1], jam) - z[-1])}
        for jam in jams
    ]
    result = minimize(
        lambda z: -z[-1],
        z0,
        method="SLSQP",
        constraints=constraints,
        options={"maxiter": cfg.outer_max_iter, "ftol": cfg.tol},
    )
    x = result.x[:-1]
    value = min(problem.value(x, jam) for jam in jams)
    if value < t0:
        return x0, t0
    return x, value


@timed
def estimate_c_rand(
    n: Channel, ell: int, opt_cfg: Optional[OptimizerConfig] = None
) -> CapacityEstimate:
    """Certified lower estimate of the l-block Holevo maximin, per channel use.

    The reported value is the objective at the returned ensemble against the
    best jammer state the inner search finds for it.

    Raises:
        ShapeError: If the channel does not have input factors (A, J).
        SizeError: If the block matrices exceed the entry cap.
    """
    return _maximin("C", n, ell, opt_cfg or OptimizerConfig())


@timed
def estimate_q_rand(
    n: Channel, ell: int, opt_cfg: Optional[OptimizerConfig] = None
) -> CapacityEstimate:
    """Certified lower estimate of the l-block coherent-information maximin, per use.

    Raises:
        ShapeError: If the channel does not have input factors (A, J).
        SizeError: If the block matrices exceed the entry cap.
    """
    return _maximin("Q", n, ell, opt_cfg or OptimizerConfig())


def blahut_arimoto(
    p_y_x: np.ndarray, tol: float = 1e-12, max_iter: int = 10000
) -> tuple:
    """Capacity in bits of a classical channel with rows p(y|x), and its prior."""
    p_y_x = np.asarray(p_y_x, dtype=float)
    m = p_y_x.shape[0]
    prior = np.ones(m) / m
    for _ in range(max_iter):
        joint = prior[:, None] * p_y_x
        column = joint.sum(axis=0)
        posterior = joint / np.where(column > 0, column, 1.0)
        # 0 log 0 = 0
        logs = np.log(np.where(posterior > 0, posterior, 1.0))
        log_r = np.sum(np.where(p_y_x > 0, p_y_x * logs, 0.0), axis=1)
        updated = np.exp(log_r - log_r.max())
        updated /= updated.sum()
        converged = np.linalg.norm(updated - prior) < tol
        prior = updated
        if converged:
            break
    output = prior @ p_y_x
    info = np.sum(prior[:, None] * rel_entr(p_y_x, output[None, :]))
    return float(info / math.log(2)), prior


def classical_avc_oracle(w: object, grid_points: int = 101, tol: float = 1e-6) -> float:
    """Random-code capacity min_q max_p I(p, W_q) of a classical AVC, in bits.

    W_q = sum_s q_s W_s; capacity is convex in the channel, so the outer
    minimum is found by a simplex grid refined locally.

    Args:
        w: Transition probabilities indexed w[s][x][y].
        grid_points: Grid resolution along each simplex edge.
        tol: Tolerance of the refinement.

    Raises:
        DomainError: If w is not row-stochastic.
    """
    family = np.asarray(w, dtype=float)
    if family.ndim != 3 or np.any(family < 0):
        raise DomainError("transition family must be a non-negative array w[s][x][y]")
    if not np.allclose(family.sum(axis=2), 1, atol=1e-12, rtol=0):
        raise DomainError("transition probabilities are not row-stochastic")
    n_s = family.shape[0]

    def _capacity(q: np.ndarray) -> float:
        return blahut_arimoto(np.tensordot(q, family, axes=1))[0]

    if n_s == 1:
        return _capacity(np.ones(1))
    if n_s == 2:
        qs = np.linspace(0, 1, grid_points)
        values = [_capacity(np.array([1 - q, q])) for q in qs]
        i = int(np.argmin(values))
        lo, hi = qs[max(i - 1, 0)], qs[min(i + 1, len(qs) - 1)]
        refined = minimize_scalar(
            lambda q: _capacity(np.array([1 - q, q])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": tol},
        )
        return float(min(values[i], refined.fun))

    steps = max(2, min(grid_points, 20))
    best_q, best_value = None, math.inf
    for corner in itertools.product(range(steps + 1), repeat=n_s - 1):
        if sum(corner) > steps:
            continue
        q = np.array(list(corner) + [steps - sum(corner)], dtype=float) / steps
        value = _capacity(q)
        if value < best_value:
            best_q, best_value = q, value
    logits = np.log(np.clip(best_q, 1e-9, None))
    refined = minimize(
        lambda z: _capacity(softmax(z)),
        logits,
        method="Nelder-Mead",
        options={"xatol": tol},
    )
    return float(min(best_value, refined.fun))
