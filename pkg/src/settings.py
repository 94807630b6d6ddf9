"""
Network configurations and their measurement settings.

Qubit 0 belongs to Alice and qubit 3 to Charlie. The non-participating
party (NP) sits on qubit 1 or 2 and disentangles with an X or Y measurement;
Bob holds the remaining middle qubit.
"""

from enum import Enum
from typing import Dict, Tuple

from core.schemas import RoundType

from .quantum_core import PauliBasis, parse_setting

ALICE_QUBIT = 0
CHARLIE_QUBIT = 3


class Configuration(str, Enum):
    """Letter: NP's disentangling basis. Digit: NP's qubit, counted from 1."""
    X2 = "x2"
    Y2 = "y2"
    X3 = "x3"
    Y3 = "y3"

    @property
    def np_qubit(self) -> int:
        return int(self.value[1]) - 1

    @property
    def np_basis(self) -> PauliBasis:
        return PauliBasis(self.value[0].upper())

    @property
    def bob_qubit(self) -> int:
        return 2 if self.np_qubit == 1 else 1

    @property
    def participants(self) -> Tuple[int, int, int]:
        """Qubits of Alice, Bob and Charlie, in that order."""
        return (ALICE_QUBIT, self.bob_qubit, CHARLIE_QUBIT)

    @property
    def label(self) -> str:
        return self.value.upper()


# Measurement settings on the lab-frame resource state, per (configuration, round type)
SETTINGS_TABLE: Dict[Configuration, Dict[RoundType, str]] = {
    Configuration.X2: {RoundType.KEYGEN: "XXZZ", RoundType.VERIFICATION: "ZXXX"},
    Configuration.Y2: {RoundType.KEYGEN: "YYZZ", RoundType.VERIFICATION: "ZYXX"},
    Configuration.X3: {RoundType.KEYGEN: "ZZXX", RoundType.VERIFICATION: "XXXZ"},
    Configuration.Y3: {RoundType.KEYGEN: "ZZYY", RoundType.VERIFICATION: "XXYZ"},
}


def settings_for(configuration: Configuration, round_type: RoundType) -> Tuple[PauliBasis, ...]:
    """Bases of qubits 0..3 for one round."""
    return parse_setting(SETTINGS_TABLE[Configuration(configuration)][RoundType(round_type)])
