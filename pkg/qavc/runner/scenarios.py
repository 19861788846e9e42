"""Library of named jammed channels with a default code and jammer state each."""

import logging
import math
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from qavc.core import channel as ch
from qavc.core import code as cd
from qavc.core import qmath
from qavc.core.channel import Channel, JammerFamily
from qavc.core.code import Code
from qavc.core.errors import DomainError
from qavc.core.qmath import DensityOperator
from qavc.lab.symmetry import ghz_state

logger = logging.getLogger(__name__)

CodeKind = Literal["basis", "pair-parity", "repetition", "identity"]
JammerKind = Literal["ghz", "correlated", "mixed", "basis"]


class Scenario(BaseModel):
    """A jammed channel N: L(A ⊗ J) -> L(B) and what to test it with."""

    model_config = ConfigDict(frozen=True)

    name: str
    description: str
    channel: Channel
    classical_states: Optional[List[DensityOperator]] = None
    # Transition probabilities w[s][x][y] when the channel embeds a classical AVC
    transition: Optional[List[List[List[float]]]] = None
    code_kind: CodeKind = "basis"
    ell: int = 2
    jammer_kind: JammerKind = "ghz"

    def family(self) -> JammerFamily:
        """The channel with its classical state set, if any."""
        return JammerFamily(base=self.channel, classical_states=self.classical_states)

    def code(self, ell: Optional[int] = None) -> Code:
        """The scenario's default deterministic code at block length ell."""
        ell = ell or self.ell
        adim, _ = self.channel.in_dims
        if self.code_kind == "pair-parity":
            return cd.pair_parity_code(ell)
        if self.code_kind == "repetition":
            return cd.repetition_code(ell)
        if self.code_kind == "identity":
            return cd.identity_quantum_code(adim, ell)
        return cd.basis_code(adim, self.channel.out_total, ell)

    def jammer_state(self, ell: Optional[int] = None) -> DensityOperator:
        """The scenario's default jammer state on J^ell."""
        ell = ell or self.ell
        jdim = self.channel.in_dims[1]
        if self.jammer_kind == "ghz":
            return ghz_state(jdim, ell)
        if self.jammer_kind == "correlated":
            return correlated_state(jdim, ell)
        if self.jammer_kind == "basis":
            return qmath.basis_state(jdim**ell - 1, jdim**ell)
        return qmath.maximally_mixed(jdim**ell)


def correlated_state(jdim: int, ell: int) -> DensityOperator:
    """(1/d) sum_j |j..j><j..j|, classically correlated letters."""
    step = sum(jdim**i for i in range(ell))
    diag = np.zeros(jdim**ell)
    diag[np.arange(jdim) * step] = 1 / jdim
    return DensityOperator(matrix=np.diag(diag))


def bsc_family(crossovers: List[float]) -> List[List[List[float]]]:
    """Binary symmetric channels w[s][x][y], one per crossover probability."""
    return [[[1 - p, p], [p, 1 - p]] for p in crossovers]


def _bitflip() -> Scenario:
    return Scenario(
        name="bitflip-jammer",
        description="CNOT from the jammer qubit onto the sender qubit, jammer dropped",
        channel=ch.bitflip_jammer(),
        code_kind="pair-parity",
        ell=3,
        jammer_kind="ghz",
    )


def _dephasing() -> Scenario:
    return Scenario(
        name="dephasing-jammer",
        description="Controlled-Z from the jammer qubit, jammer discarded",
        channel=ch.dephasing_jammer(),
        code_kind="basis",
        ell=2,
        jammer_kind="ghz",
    )


def _bsc() -> Scenario:
    transition = bsc_family([0.1, 0.2])
    return Scenario(
        name="bsc-family",
        description="Classical AVC of BSCs with crossovers 0.1 and 0.2",
        channel=ch.embed_classical_avc(transition),
        classical_states=[qmath.basis_state(0, 2), qmath.basis_state(1, 2)],
        transition=transition,
        code_kind="basis",
        ell=2,
        jammer_kind="correlated",
    )


def _depolarizing() -> Scenario:
    return Scenario(
        name="depolarizing",
        description="Jammer letter 1 fully depolarizes the sender qubit",
        channel=ch.depolarizing_jammer(1.0),
        code_kind="basis",
        ell=2,
        jammer_kind="ghz",
    )


def _depolarizing_quantum() -> Scenario:
    return Scenario(
        name="depolarizing-quantum",
        description="Identity quantum code against a jammer that depolarizes w.p. 0.2",
        channel=ch.depolarizing_jammer(0.2),
        code_kind="identity",
        ell=2,
        jammer_kind="ghz",
    )


def _ignoring() -> Scenario:
    return Scenario(
        name="jammer-ignoring",
        description="Identity on the sender qubit, jammer discarded",
        channel=ch.jammer_ignoring(),
        code_kind="basis",
        ell=2,
        jammer_kind="mixed",
    )


def _ghz_test() -> Scenario:
    return Scenario(
        name="ghz-jammer-test",
        description="Bit-flip jammer against a basis code with an entangled GHZ jammer",
        channel=ch.bitflip_jammer(),
        code_kind="basis",
        ell=3,
        jammer_kind="ghz",
    )


_SCENARIOS: Dict[str, Callable[[], Scenario]] = {
    "bitflip-jammer": _bitflip,
    "bsc-family": _bsc,
    "dephasing-jammer": _dephasing,
    "depolarizing": _depolarizing,
    "depolarizing-quantum": _depolarizing_quantum,
    "ghz-jammer-test": _ghz_test,
    "jammer-ignoring": _ignoring,
}


def list_scenarios() -> List[str]:
    """Names of the built-in scenarios in lexicographic order."""
    return sorted(_SCENARIOS)


def get_scenario(name: str) -> Scenario:
    """Build the named scenario.

    Raises:
        DomainError: If no scenario has that name.
    """
    try:
        return _SCENARIOS[name]()
    except KeyError as error:
        raise DomainError(
            f"unknown scenario {name!r}; choose from {', '.join(list_scenarios())}"
        ) from error


def inline_scenario(channel: Channel) -> Scenario:
    """Wrap a user-supplied jammed channel with a basis code."""
    if len(channel.in_dims) != 2:
        raise DomainError(
            f"a jammed channel needs input factors (A, J), got {channel.in_dims}"
        )
    logger.info("using inline channel %s -> %s", channel.in_dims, channel.out_dims)
    ell = 2 if math.prod(channel.in_dims) ** 2 <= 256 else 1
    return Scenario(
        name="inline",
        description="Channel supplied with the experiment config",
        channel=channel,
        ell=ell,
        jammer_kind="mixed",
    )
