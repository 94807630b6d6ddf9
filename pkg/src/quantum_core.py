"""
Pure-state simulator for small cluster states.

Qubit 0 is the most significant bit of an amplitude index, so the ket
|q0 q1 ... q(n-1)> reads left to right. Measurement outcome +1 stands for
|+>, |+i> and |0> in the X, Y and Z bases.
"""

from enum import Enum
from typing import Any, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationInfo, field_validator

from core.errors import ContractError, QubitIndexError, SizeError

MAX_QUBITS = 12
NORM_TOL = 1e-12

OutcomeVector = Tuple[int, ...]


class PauliBasis(str, Enum):
    X = "X"
    Y = "Y"
    Z = "Z"


def parse_setting(text: str) -> Tuple[PauliBasis, ...]:
    """'XXZZ' -> (X, X, Z, Z)."""
    return tuple(PauliBasis(ch) for ch in text.upper())


def format_setting(setting: Sequence[PauliBasis]) -> str:
    return "".join(PauliBasis(b).value for b in setting)


class NoiseKind(str, Enum):
    IDEAL = "ideal"
    WHITE = "global_white_noise"


class NoiseModel(BaseModel):
    """Ideal statistics mixed with uniform outcomes at weight 1 - v."""
    kind: NoiseKind = NoiseKind.IDEAL
    visibility: float = Field(default=1.0, ge=0.0, le=1.0)

    class Config:
        frozen = True

    @property
    def effective_visibility(self) -> float:
        return 1.0 if self.kind is NoiseKind.IDEAL else self.visibility

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(kind=NoiseKind.IDEAL)

    @classmethod
    def white(cls, visibility: float) -> "NoiseModel":
        return cls(kind=NoiseKind.WHITE, visibility=visibility)


class StateVector(BaseModel):
    """Normalized amplitudes of an n-qubit pure state."""
    num_qubits: int = Field(ge=1, le=MAX_QUBITS)
    amplitudes: Any  # complex128 array of length 2**num_qubits

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("amplitudes")
    @classmethod
    def _check_amplitudes(cls, value: Any, info: ValidationInfo) -> np.ndarray:
        amps = np.array(value, dtype=np.complex128).reshape(-1)
        n = info.data.get("num_qubits")
        if n is not None and amps.size != 2 ** n:
            raise ValueError(f"{n} qubits need {2 ** n} amplitudes, got {amps.size}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {norm!r})")
        amps.flags.writeable = False
        return amps

    @classmethod
    def from_amplitudes(cls, amplitudes: Any) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else 0
        if amps.size == 0 or 2 ** n != amps.size:
            raise SizeError(f"amplitude count {amps.size} is not a power of two")
        _check_size(n, 1)
        return cls(num_qubits=n, amplitudes=amps)

    def equals_up_to_phase(self, other: "StateVector", atol: float = 1e-10) -> bool:
        """Compare after removing the phase of the first nonzero amplitude."""
        if self.num_qubits != other.num_qubits:
            return False
        nonzero = np.flatnonzero(np.abs(self.amplitudes) > atol)
        if nonzero.size == 0:
            return False
        k = nonzero[0]
        if abs(other.amplitudes[k]) <= atol:
            return False
        mine = self.amplitudes / (self.amplitudes[k] / abs(self.amplitudes[k]))
        theirs = other.amplitudes / (other.amplitudes[k] / abs(other.amplitudes[k]))
        return bool(np.allclose(mine, theirs, atol=atol, rtol=0.0))


# ══════════════════════════════════════════════════════════════════════════════
#  GATES
# ══════════════════════════════════════════════════════════════════════════════

_SQRT_HALF = 1.0 / np.sqrt(2.0)

LOCAL_GATES = {
    "H": np.array([[1, 1], [1, -1]], dtype=np.complex128) * _SQRT_HALF,
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    "S": np.array([[1, 0], [0, 1j]], dtype=np.complex128),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=np.complex128),
}

# rotates each basis so that outcome +1 lands on |0>
BASIS_CHANGE = {
    PauliBasis.X: LOCAL_GATES["H"],
    PauliBasis.Y: LOCAL_GATES["H"] @ LOCAL_GATES["SDG"],
    PauliBasis.Z: np.eye(2, dtype=np.complex128),
}

# U^dagger P U = sign * P' for the Clifford gates used to relate resource states
_CONJUGATION = {
    "H": {PauliBasis.X: (PauliBasis.Z, 1), PauliBasis.Y: (PauliBasis.Y, -1), PauliBasis.Z: (PauliBasis.X, 1)},
    "X": {PauliBasis.X: (PauliBasis.X, 1), PauliBasis.Y: (PauliBasis.Y, -1), PauliBasis.Z: (PauliBasis.Z, -1)},
}

# |LC'_4> = H_1 X_2 X_3 H_4 |LC_4>
LAB_FRAME_GATES = ("H", "X", "X", "H")


def _check_size(n: int, minimum: int) -> None:
    if not minimum <= n <= MAX_QUBITS:
        raise SizeError(f"qubit count must be in [{minimum}, {MAX_QUBITS}], got {n}")


def _check_index(state: StateVector, i: int) -> None:
    if not 0 <= i < state.num_qubits:
        raise QubitIndexError(f"qubit {i} out of range for {state.num_qubits} qubits")


def _bit_of(indices: np.ndarray, n: int, qubit: int) -> np.ndarray:
    return (indices >> (n - 1 - qubit)) & 1


def _apply_matrix(amplitudes: np.ndarray, n: int, matrix: np.ndarray, qubit: int) -> np.ndarray:
    psi = amplitudes.reshape((2,) * n)
    psi = np.moveaxis(np.tensordot(matrix, psi, axes=([1], [qubit])), 0, qubit)
    return psi.reshape(-1)


def build_plus_state(n: int) -> StateVector:
    """|+>^n."""
    _check_size(n, 1)
    return StateVector(num_qubits=n, amplitudes=np.full(2 ** n, 2.0 ** (-n / 2)))


def apply_cz(state: StateVector, i: int, j: int) -> StateVector:
    """Negate every amplitude whose bits i and j are both 1."""
    _check_index(state, i)
    _check_index(state, j)
    if i == j:
        raise QubitIndexError(f"CZ needs two distinct qubits, got {i} twice")
    n = state.num_qubits
    idx = np.arange(2 ** n)
    amps = np.array(state.amplitudes)
    amps[(_bit_of(idx, n, i) & _bit_of(idx, n, j)) == 1] *= -1
    return StateVector(num_qubits=n, amplitudes=amps)


def apply_local_gate(state: StateVector, gate: str, i: int) -> StateVector:
    """Apply a named single-qubit gate (H, X, Y, Z, S, SDG) to qubit i."""
    matrix = LOCAL_GATES.get(str(gate).upper())
    if matrix is None:
        raise ContractError(f"unknown gate {gate!r}; expected one of {sorted(LOCAL_GATES)}")
    _check_index(state, i)
    amps = _apply_matrix(state.amplitudes, state.num_qubits, matrix, i)
    return StateVector(num_qubits=state.num_qubits, amplitudes=amps)


def build_linear_cluster(n: int) -> StateVector:
    """CZ(0,1) CZ(1,2) ... CZ(n-2,n-1) |+>^n."""
    _check_size(n, 2)
    state = build_plus_state(n)
    for q in range(n - 1):
        state = apply_cz(state, q, q + 1)
    return state


def build_lab_state() -> StateVector:
    """The four-qubit resource state in the frame of the measurement settings table."""
    state = build_linear_cluster(4)
    for q, gate in enumerate(LAB_FRAME_GATES):
        state = apply_local_gate(state, gate, q)
    return state


# ══════════════════════════════════════════════════════════════════════════════
#  MEASUREMENT
# ══════════════════════════════════════════════════════════════════════════════

def outcome_signs(n: int) -> np.ndarray:
    """(2**n, n) table of +1/-1 outcomes; row k is outcome index k."""
    idx = np.arange(2 ** n)[:, None]
    bits = (idx >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1 - 2 * bits


def outcome_from_index(index: int, n: int) -> OutcomeVector:
    return tuple(int(s) for s in outcome_signs(n)[index])


def outcome_to_index(outcome: Sequence[int]) -> int:
    index = 0
    for o in outcome:
        index = (index << 1) | (0 if o == 1 else 1)
    return index


def _check_setting(state: StateVector, setting: Sequence[PauliBasis]) -> Tuple[PauliBasis, ...]:
    if len(setting) != state.num_qubits:
        raise ContractError(
            f"setting has {len(setting)} bases for a {state.num_qubits}-qubit state"
        )
    return tuple(PauliBasis(b) for b in setting)


def outcome_distribution(state: StateVector, setting: Sequence[PauliBasis]) -> np.ndarray:
    """Born-rule probabilities of all 2**n joint outcomes, indexed as outcome_signs."""
    setting = _check_setting(state, setting)
    amps = state.amplitudes
    for q, basis in enumerate(setting):
        if basis is not PauliBasis.Z:
            amps = _apply_matrix(amps, state.num_qubits, BASIS_CHANGE[basis], q)
    probs = np.abs(amps) ** 2
    return probs / probs.sum()


def sample_from_distribution(probs: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> int:
    """Draw one outcome index: ideal statistics with probability v, else uniform."""
    if rng.random() < noise.effective_visibility:
        index = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
        return min(index, probs.size - 1)
    return int(rng.integers(probs.size))


def sample_outcomes(
    state: StateVector,
    setting: Sequence[PauliBasis],
    noise: NoiseModel,
    rng: np.random.Generator,
) -> OutcomeVector:
    probs = outcome_distribution(state, setting)
    return outcome_from_index(sample_from_distribution(probs, noise, rng), state.num_qubits)


def sample_index_batch(
    probs: np.ndarray, noise: NoiseModel, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Vectorized sample_from_distribution."""
    ideal = rng.choice(probs.size, size=size, p=probs / probs.sum())
    uniform = rng.integers(probs.size, size=size)
    keep = rng.random(size) < noise.effective_visibility
    return np.where(keep, ideal, uniform)


def sample_outcome_batch(
    state: StateVector,
    setting: Sequence[PauliBasis],
    noise: NoiseModel,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    """(size, n) array of outcomes, for Monte-Carlo checks of the noise model."""
    probs = outcome_distribution(state, setting)
    return outcome_signs(state.num_qubits)[sample_index_batch(probs, noise, rng, size)]


# ══════════════════════════════════════════════════════════════════════════════
#  LOCAL EQUIVALENCE
# ══════════════════════════════════════════════════════════════════════════════

def conjugate_setting(
    setting: Sequence[PauliBasis], gates: Sequence[str]
) -> Tuple[Tuple[PauliBasis, ...], Tuple[int, ...]]:
    """
    Map a setting on U|psi> to the equivalent setting on |psi>.

    U is the product of single-qubit gates (H or X, one per qubit). Returns the
    bases to measure on |psi> and per-qubit signs; an outcome o on U|psi>
    corresponds to o * sign on |psi>.
    """
    if len(setting) != len(gates):
        raise ContractError(f"{len(setting)} bases but {len(gates)} gates")
    bases, signs = [], []
    for basis, gate in zip(setting, gates):
        table = _CONJUGATION.get(str(gate).upper())
        if table is None:
            raise ContractError(f"cannot conjugate through gate {gate!r}")
        new_basis, sign = table[PauliBasis(basis)]
        bases.append(new_basis)
        signs.append(sign)
    return tuple(bases), tuple(signs)


def flip_outcomes(probs: np.ndarray, signs: Sequence[int]) -> np.ndarray:
    """Relabel a distribution so that outcome o becomes o * signs."""
    n = len(signs)
    mask = 0
    for q, s in enumerate(signs):
        if s == -1:
            mask |= 1 << (n - 1 - q)
    return np.asarray(probs)[np.arange(2 ** n) ^ mask]
