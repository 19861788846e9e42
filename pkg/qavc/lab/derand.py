"""Elimination of correlation: shrink a random code to a few i.i.d. samples.

Drawing n variants i.i.d. from a random code with worst-case error epsilon and
averaging their error observables gives a mean below (epsilon + delta) 1 except
with probability at most |J|^l exp(-n D(epsilon + delta || epsilon)), where D
is the binary relative entropy in nats. Once that bound is below one a good
sample exists; derandomize() finds one by drawing and checking.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel
from scipy.special import rel_entr

from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel
from qavc.core.code import ErrorObservable, RandomCode
from qavc.core.errors import DerandomizationError, DomainError, VerificationError
from qavc.settings import get_settings
from qavc.utils import make_rng, ordered_map, timed

logger = logging.getLogger(__name__)

# Slack of the operator-order test on the empirical mean.
ORDER_TOL = 1e-9


class DerandPlan(BaseModel):
    """Sample-size and shared-randomness accounting for one derandomization."""

    epsilon: float
    delta: float
    ell: int
    jdim: int
    n: int
    n_pinsker: int
    n_exact: int
    relative_entropy: Optional[float]  # nats; None when infinite
    tail_bound: float
    shared_bits: float
    bit_bound: Optional[float]  # None when |J| = 1


class DerandResult(BaseModel):
    """A successful draw of n variants and the uniform code over them."""

    chosen: List[int]
    reduced: RandomCode
    achieved: float
    target: float
    attempts: int
    plan: DerandPlan


def bin_rel_entropy(u: float, v: float) -> float:
    """Binary relative entropy D(u || v) in nats.

    Returns infinity (with a warning) when v is 0 or 1 and u differs from it.

    Raises:
        DomainError: If u or v lies outside [0, 1].
    """
    if not (0 <= u <= 1 and 0 <= v <= 1):
        raise DomainError(f"D({u} || {v}) needs arguments in [0, 1]")
    if u == v:
        return 0.0
    value = float(rel_entr(u, v) + rel_entr(1 - u, 1 - v))
    if math.isinf(value):
        logger.warning("binary relative entropy D(%s || %s) is infinite", u, v)
    return value


def _check_params(epsilon: float, delta: float, jdim: int, ell: int) -> None:
    if delta <= 0 or epsilon < 0 or epsilon + delta >= 1:
        raise DomainError(
            "need delta > 0, epsilon >= 0 and epsilon + delta < 1, "
            f"got {epsilon}, {delta}"
        )
    if jdim < 1 or ell < 1:
        raise DomainError(f"need |J| >= 1 and ell >= 1, got {jdim}, {ell}")


def sample_size(epsilon: float, delta: float, jdim: int, ell: int) -> tuple:
    """Sample sizes making the tail bound drop below one.

    Returns:
        (n_pinsker, n_exact): floor(l ln|J| / (2 delta^2)) + 1 from Pinsker's
        inequality, and the smallest n with |J|^l exp(-n D) < 1.

    Raises:
        DomainError: If epsilon + delta >= 1 or delta <= 0.
    """
    _check_params(epsilon, delta, jdim, ell)
    log_dim = ell * math.log(jdim)
    n_pinsker = math.floor(log_dim / (2 * delta * delta)) + 1
    divergence = bin_rel_entropy(epsilon + delta, epsilon)
    if math.isinf(divergence):
        return n_pinsker, 1
    n_exact = math.floor(log_dim / divergence) + 1
    return n_pinsker, n_exact


def tail_bound(n: int, epsilon: float, delta: float, jdim: int, ell: int) -> float:
    """|J|^l exp(-n D(epsilon + delta || epsilon)), the matrix tail bound."""
    _check_params(epsilon, delta, jdim, ell)
    if n == 0:
        return float(jdim**ell)
    divergence = bin_rel_entropy(epsilon + delta, epsilon)
    if math.isinf(divergence):
        return 0.0
    return math.exp(ell * math.log(jdim) - n * divergence)


def plan_derandomization(
    epsilon: float, delta: float, jdim: int, ell: int, n: Optional[int] = None
) -> DerandPlan:
    """All the numbers of a derandomization before any sampling.

    Args:
        epsilon: Worst-case error of the random code.
        delta: Allowed increase of the error.
        jdim: Dimension of one jammer letter.
        ell: Block length.
        n: Sample size; defaults to the exact one.
    """
    n_pinsker, n_exact = sample_size(epsilon, delta, jdim, ell)
    chosen = n_exact if n is None else n
    if chosen < 1:
        raise DomainError(f"sample size must be >= 1, got {chosen}")
    divergence = bin_rel_entropy(epsilon + delta, epsilon)
    bit_bound = None
    if jdim > 1:
        bit_bound = math.log2(ell) - 2 * math.log2(delta) + math.log2(math.log(jdim))
    return DerandPlan(
        epsilon=epsilon,
        delta=delta,
        ell=ell,
        jdim=jdim,
        n=chosen,
        n_pinsker=n_pinsker,
        n_exact=n_exact,
        relative_entropy=None if math.isinf(divergence) else divergence,
        tail_bound=tail_bound(chosen, epsilon, delta, jdim, ell),
        shared_bits=math.log2(chosen),
        bit_bound=bit_bound,
    )


def binomial_sigma(p: float, trials: int) -> float:
    """Standard deviation of a binomial frequency."""
    return math.sqrt(max(p * (1 - p), 0.0) / trials)


def _observables(rc: RandomCode, n_channel: Channel) -> List[ErrorObservable]:
    return ordered_map(lambda v: cd.observable(v, n_channel), rc.variants)


def _draw(rc: RandomCode, n: int, seed: int, attempt: int) -> np.ndarray:
    rng = make_rng(seed, attempt)
    return rng.choice(len(rc.variants), size=n, p=np.asarray(rc.weights))


def _empirical_mean(
    observables: Sequence[ErrorObservable], chosen: np.ndarray
) -> np.ndarray:
    counts = np.bincount(chosen, minlength=len(observables))
    total = np.zeros_like(observables[0].matrix.matrix)
    for index, count in enumerate(counts):
        if count:
            total = total + count * observables[index].matrix.matrix
    return total / len(chosen)


def _passes(mean: np.ndarray, target: float) -> bool:
    return qmath.op_leq(mean, target * np.eye(mean.shape[0]), ORDER_TOL)


@timed
def derandomize(
    rc: RandomCode,
    n_channel: Channel,
    delta: float,
    rng_seed: int,
    epsilon: Optional[float] = None,
    n: Optional[int] = None,
) -> DerandResult:
    """Find n variants whose uniform mixture has worst-case error <= epsilon + delta.

    Attempt k draws n indices i.i.d. from rc's weights with the stream
    derive_seed(rng_seed, k) and accepts when the mean of their observables is
    below (epsilon + delta) 1.

    Args:
        rc: The random code to shrink.
        n_channel: Jammed channel with input factors (A, J).
        delta: Allowed increase of the worst-case error.
        rng_seed: Seed of the attempt streams.
        epsilon: Worst-case error of rc; computed when not given.
        n: Sample size; the exact one by default.

    Raises:
        DomainError: If epsilon + delta >= 1.
        DerandomizationError: If every attempt fails.
    """
    observables = _observables(rc, n_channel)
    if epsilon is None:
        epsilon = qmath.lambda_max(cd.mean_observable(rc, n_channel, observables))
        epsilon = min(max(epsilon, 0.0), 1.0)
    plan = plan_derandomization(epsilon, delta, n_channel.in_dims[1], rc.ell, n)
    target = epsilon + delta
    max_attempts = get_settings().derand_max_attempts
    best_error = math.inf
    failures = 0
    for attempt in range(max_attempts):
        chosen = _draw(rc, plan.n, rng_seed, attempt)
        mean = _empirical_mean(observables, chosen)
        if not _passes(mean, target):
            failures += 1
            best_error = min(best_error, qmath.lambda_max(mean))
            logger.debug("attempt %s failed", attempt)
            continue
        achieved = qmath.lambda_max(mean)
        if achieved > target + ORDER_TOL:
            raise VerificationError(
                f"accepted sample has worst-case error {achieved} above {target}"
            )
        labels = rc.labels or [str(i) for i in range(len(rc.variants))]
        reduced = RandomCode.uniform(
            [rc.variants[i] for i in chosen], labels=[labels[i] for i in chosen]
        )
        logger.info(
            "derandomized to %s variants (%.2f shared bits) after %s attempts",
            plan.n,
            plan.shared_bits,
            attempt + 1,
        )
        return DerandResult(
            chosen=[int(i) for i in chosen],
            reduced=reduced,
            achieved=achieved,
            target=target,
            attempts=attempt + 1,
            plan=plan,
        )
    raise DerandomizationError(
        max_attempts, failures, best_error, target, plan.tail_bound
    )


def empirical_failure_rate(
    rc: RandomCode,
    n_channel: Channel,
    delta: float,
    n: int,
    trials: int,
    rng_seed: int,
    epsilon: Optional[float] = None,
) -> float:
    """Fraction of trials whose n-sample mean fails the operator-order test.

    Trial t uses the stream derive_seed(rng_seed, t).

    Raises:
        DomainError: If trials < 1.
    """
    if trials < 1:
        raise DomainError(f"need at least one trial, got {trials}")
    observables = _observables(rc, n_channel)
    if epsilon is None:
        epsilon = qmath.lambda_max(cd.mean_observable(rc, n_channel, observables))
    target = epsilon + delta

    def _fails(trial: int) -> bool:
        chosen = _draw(rc, n, rng_seed, trial)
        return not _passes(_empirical_mean(observables, chosen), target)

    failures = ordered_map(_fails, range(trials))
    return sum(failures) / trials
