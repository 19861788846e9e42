"""Finite nets of jammer states and the telescoping block approximation.

A net S' of single-letter jammer states covers a family if every member s has
a net point s' with 1/2 ||N_s - N_s'||_diamond <= eta. Distances are measured
with the dual upper bound on Choi matrices, so a validated covering holds for
the true diamond distance too.
"""

import itertools
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from qavc.core import channel as ch
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel, DiamondDistance, JammerFamily
from qavc.core.code import RandomCode
from qavc.core.errors import (
    DomainError,
    NetConvergenceError,
    QavcError,
    SizeError,
    TelescopeStepError,
)
from qavc.core.qmath import CMatrix, DensityOperator
from qavc.settings import get_settings
from qavc.utils import make_rng, timed

logger = logging.getLogger(__name__)

# Additive slack on every covering and telescoping comparison.
COVER_TOL = 1e-6


class StateNet(BaseModel):
    """Net points, the family channel they refer to, and their validation report."""

    model_config = ConfigDict(frozen=True)

    eta: float
    points: List[DensityOperator]
    channel: Channel
    radius: float
    validated_on: int
    rounds: int
    log10_bound: float
    bound_ok: bool
    eta_tilde: float

    @property
    def size(self) -> int:
        """Number of net points."""
        return len(self.points)


class NetGap(BaseModel):
    """Worst expected error over net tuples against sampled family tuples."""

    sup_net: float
    sup_sampled: float
    slack: float
    ok: bool
    net_sampled: bool


class TelescopeResult(BaseModel):
    """The final approximant and the bound of every replacement step."""

    sigma_prime: DensityOperator
    step_bounds: List[float]
    total_bound: float


class TelescopeGap(BaseModel):
    """Measured distance of the block channels against the summed step bounds."""

    measured: DiamondDistance
    bound: float
    # the see-saw lower end is within the bound
    ok: bool
    # the dual upper end is within the bound
    certified: bool


def cardinality_bound(adim: int, bdim: int, eta: float) -> float:
    """log10 of (10 |A|^2 / eta)^{2 |A|^2 |B|^2}, the volumetric net size."""
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    return 2 * adim**2 * bdim**2 * math.log10(10 * adim**2 / eta)


def lifted_cardinality_bound(adim: int, bdim: int, eta: float, ell: int) -> float:
    """log10 of the size of the product net S'^l."""
    return ell * cardinality_bound(adim, bdim, eta)


def eta_tilde(eta: float, adim: int) -> float:
    """eta / |A|^2, the Choi-channel accuracy matching a diamond accuracy eta."""
    return eta / adim**2


def _chois(family_channel: Channel, states: Sequence[DensityOperator]) -> np.ndarray:
    """Unnormalised Choi matrices of N_sigma for each sigma, via the Choi channel."""
    gamma = ch.choi_channel(family_channel)
    adim = family_channel.in_dims[0]
    return np.stack([adim * ch.apply_operator(gamma, s.matrix) for s in states])


def _distances(chois: np.ndarray, targets: np.ndarray, n: Channel) -> np.ndarray:
    """Matrix of upper-bound distances, rows indexed by chois, columns by targets."""
    adim, bdim = n.in_dims[0], n.out_total
    return np.stack([ch.choi_upper_bounds(c, targets, adim, bdim) for c in chois])


def _greedy_cover(dist: np.ndarray, eta: float) -> List[int]:
    """Indices of a covering of every pool point within eta.

    Start at the point farthest from pool[0]. Then repeatedly take the uncovered
    point nearest the net and add the candidate within eta of it that covers the
    most uncovered points, preferring candidates far from the net on ties.
    """
    first = int(np.argmax(dist[0])) if np.max(dist[0]) > 0 else 0
    net = [first]
    covered = dist[first] <= eta
    to_net = dist[first].copy()
    while not np.all(covered):
        uncovered = np.flatnonzero(~covered)
        target = int(uncovered[np.argmin(to_net[uncovered])])
        candidates = np.flatnonzero(dist[:, target] <= eta)
        gains = np.array(
            [np.count_nonzero(dist[c, uncovered] <= eta) for c in candidates]
        )
        best = max(
            range(len(candidates)), key=lambda i: (gains[i], to_net[candidates[i]], -i)
        )
        chosen = int(candidates[best])
        net.append(chosen)
        covered |= dist[chosen] <= eta
        to_net = np.minimum(to_net, dist[chosen])
    return net


def _random_states(jdim: int, count: int, seed: int) -> List[DensityOperator]:
    rng = make_rng(seed)
    return [
        qmath.random_density(jdim, rng, rank=1 if i % 2 == 0 else None)
        for i in range(count)
    ]


@timed
def build_state_net(
    family: JammerFamily,
    eta: float,
    seed: int = 0,
    pool_size: int = 400,
    validation_size: int = 1000,
    max_rounds: int = 5,
) -> StateNet:
    """Greedy covering net of the family's jammer states in half-diamond distance.

    For a finite state set S the pool and the validation set are S itself.
    Otherwise the pool is a state grid on J and the net is validated on seeded
    random states; uncovered validation states join the pool and the net is
    rebuilt.

    Raises:
        DomainError: If eta <= 0.
        NetConvergenceError: If validation still fails after max_rounds.
    """
    if eta <= 0:
        raise DomainError(f"eta must be positive, got {eta}")
    n = family.base
    if family.classical_states:
        pool = list(family.classical_states)
        validation = list(family.classical_states)
    else:
        pool = qmath.state_grid(family.jdim, pool_size, seed)
        validation = _random_states(family.jdim, validation_size, seed)
    validation_chois = _chois(n, validation)

    best_radius = math.inf
    for rounds in range(1, max_rounds + 1):
        pool_chois = _chois(n, pool)
        indices = _greedy_cover(_distances(pool_chois, pool_chois, n), eta)
        net_chois = pool_chois[indices]
        to_net = _distances(net_chois, validation_chois, n).min(axis=0)
        radius = float(to_net.max())
        best_radius = min(best_radius, radius)
        logger.info(
            "net round %s: %s points, radius %.6g", rounds, len(indices), radius
        )
        if radius <= eta + COVER_TOL:
            points = [pool[i] for i in indices]
            log10_bound = cardinality_bound(family.adim, family.bdim, eta)
            return StateNet(
                eta=eta,
                points=points,
                channel=n,
                radius=radius,
                validated_on=len(validation),
                rounds=rounds,
                log10_bound=log10_bound,
                bound_ok=math.log10(len(points)) <= log10_bound,
                eta_tilde=eta_tilde(eta, family.adim),
            )
        violators = np.flatnonzero(to_net > eta + COVER_TOL)
        pool = pool + [validation[i] for i in violators]
    raise NetConvergenceError(eta, best_radius, max_rounds)


def _block_tuples(
    points: Sequence[DensityOperator], ell: int, sample: Optional[int], seed: int
) -> Tuple[List[tuple], bool]:
    cap = get_settings().max_net_tuples
    if len(points) ** ell <= cap:
        return list(itertools.product(points, repeat=ell)), False
    if sample is None:
        raise SizeError(f"{len(points)}^{ell} net tuples exceed the cap of {cap}")
    logger.warning("sampling %s of %s^%s net tuples", sample, len(points), ell)
    rng = make_rng(seed)
    picks = rng.integers(len(points), size=(sample, ell))
    return [tuple(points[i] for i in row) for row in picks], True


def _tuple_value(obs: CMatrix, states: Sequence[DensityOperator]) -> float:
    return qmath.trace_product(qmath.kron_all([s.matrix for s in states]), obs)


def lifted_net_gap(
    net: StateNet,
    c: RandomCode,
    n: Channel,
    ell: int,
    trials: int,
    seed: int = 0,
    family_states: Optional[List[DensityOperator]] = None,
    sample_net: Optional[int] = None,
) -> NetGap:
    """Compare the worst expected error over net^l with that over sampled family tuples.

    Every letter moves the error by at most the net radius, so sup_sampled must
    not exceed sup_net + l * radius.

    Args:
        net: A validated net for the channel n.
        c: Random code of block length ell.
        n: Jammed channel with input factors (A, J).
        ell: Block length.
        trials: Number of sampled family tuples.
        seed: Seed of the sampled tuples.
        family_states: Finite state set S to sample from; random states otherwise.
        sample_net: Net tuples to sample when net^l exceeds the cap.

    Raises:
        SizeError: If |net|^l exceeds the cap and sample_net is not given.
    """
    if c.ell != ell:
        raise DomainError(f"code of block length {c.ell} used with ell={ell}")
    obs = cd.mean_observable(c, n)
    tuples, net_sampled = _block_tuples(net.points, ell, sample_net, seed)
    sup_net = max(_tuple_value(obs, t) for t in tuples)

    rng = make_rng(seed, 1)
    jdim = n.in_dims[1]
    sup_sampled = -math.inf
    for _ in range(trials):
        if family_states:
            picks = rng.integers(len(family_states), size=ell)
            letters = [family_states[int(i)] for i in picks]
        else:
            letters = [qmath.random_density(jdim, rng) for _ in range(ell)]
        sup_sampled = max(sup_sampled, _tuple_value(obs, letters))
    slack = ell * net.radius
    return NetGap(
        sup_net=sup_net,
        sup_sampled=sup_sampled,
        slack=slack,
        ok=sup_sampled <= sup_net + slack + COVER_TOL,
        net_sampled=net_sampled,
    )


class NetProjectionStep:
    """Replace one jammer letter by measure-and-prepare onto net points.

    Letter j of the computational basis is replaced by tau_j, the net point
    nearest |j><j|. The jammed channel dephases J, so the replacement moves the
    block channel by at most max_j 1/2 ||N_j - N_{tau_j}||_diamond.
    """

    def __init__(self, net: StateNet):
        """Pick the net point for each basis letter.

        Raises:
            DomainError: If the net's channel does not dephase its jammer input.
        """
        if not ch.is_classical_jammer(net.channel):
            raise DomainError("net projection needs a channel that dephases J")
        self.net = net
        jdim = net.channel.in_dims[1]
        basis = [qmath.basis_state(j, jdim) for j in range(jdim)]
        dist = _distances(
            _chois(net.channel, basis), _chois(net.channel, net.points), net.channel
        )
        self.targets = [net.points[int(i)] for i in np.argmin(dist, axis=1)]
        self.bound = float(np.max(np.min(dist, axis=1)))
        kraus = []
        for j, tau in enumerate(self.targets):
            values, vectors = qmath.eig_hermitian(tau.matrix)
            for value, vector in zip(values, vectors.T):
                if value > 1e-15:
                    read_j = qmath.ket(j, jdim).conj()
                    kraus.append(math.sqrt(value) * np.outer(vector, read_j))
        self.channel = Channel(in_dims=[jdim], out_dims=[jdim], kraus=kraus)

    def __call__(self, sigma: DensityOperator, step: int, ell: int) -> tuple:
        """Replace letter step of sigma; return the new state and the step bound."""
        jdim = self.net.channel.in_dims[1]
        local = ch.extend(self.channel, left=jdim**step, right=jdim ** (ell - step - 1))
        return ch.apply(local, sigma), self.bound


def telescope_approx(sigma: DensityOperator, step_approx, ell: int) -> TelescopeResult:
    """Replace the letters of sigma one at a time, sigma^(i) from sigma^(i-1).

    Args:
        sigma: Jammer state on J^l.
        step_approx: Callable (state, step, ell) -> (state, bound).
        ell: Block length.

    Raises:
        TelescopeStepError: If a step fails, carrying its index.
    """
    current = sigma
    bounds = []
    for step in range(ell):
        try:
            current, bound = step_approx(current, step, ell)
        except (QavcError, ValueError) as error:
            raise TelescopeStepError(step, str(error)) from error
        bounds.append(float(bound))
    return TelescopeResult(
        sigma_prime=current, step_bounds=bounds, total_bound=sum(bounds)
    )


def telescope_gap(
    n: Channel, sigma: DensityOperator, result: TelescopeResult, seed: int = 0
) -> TelescopeGap:
    """Diamond interval between (N^{⊗l})_sigma and (N^{⊗l})_sigma', and the bound."""
    ell = len(result.step_bounds)
    power = ch.tensor_power(n, ell)
    measured = ch.diamond_distance(
        ch.fix_jammer(power, sigma), ch.fix_jammer(power, result.sigma_prime), seed=seed
    )
    return TelescopeGap(
        measured=measured,
        bound=result.total_bound,
        ok=measured.value <= result.total_bound + COVER_TOL,
        certified=measured.upper <= result.total_bound + COVER_TOL,
    )
