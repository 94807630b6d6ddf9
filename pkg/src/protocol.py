"""
Conference key agreement round machine.

Each round the NP disentangles its qubit and announces the outcome. In a
key-generation round Alice, Bob and Charlie turn their outcomes into bits and
flip them according to the announced outcome; in a verification round all
four parties measure a stabilizer and check its sign.
"""

from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core import BaseProtocol, ErrorEstimate, RoundRecord, RoundType, get_logger
from core.errors import ContractError, DomainError, EstimationError, ModelError

from .config import ProtocolParams, Scheduling
from .quantum_core import (
    NoiseModel,
    PauliBasis,
    StateVector,
    build_lab_state,
    format_setting,
    outcome_distribution,
    outcome_signs,
    sample_from_distribution,
    sample_index_batch,
    sample_outcomes,
)
from .settings import Configuration, settings_for

logger = get_logger(__name__)

SUPPORT_TOL = 1e-12
NUM_QUBITS = 4


def outcome_bit(outcome: int) -> int:
    """+1 -> 0, -1 -> 1."""
    return 0 if outcome == 1 else 1


class ParityRelation(BaseModel):
    """The product of the outcomes on `qubits` equals `sign`."""
    qubits: Tuple[int, ...]
    sign: int

    class Config:
        frozen = True

    def holds(self, outcomes: Sequence[int]) -> bool:
        return int(np.prod([outcomes[q] for q in self.qubits])) == self.sign


class KeyCorrection(BaseModel):
    """Participant parities when the NP announces np_outcome."""
    np_outcome: int
    sign_ab: int
    sign_ac: int

    class Config:
        frozen = True

    @property
    def flips(self) -> Tuple[int, int, int]:
        # Alice keeps her bit; Bob and Charlie align to hers
        return (0, outcome_bit(self.sign_ab), outcome_bit(self.sign_ac))


class CorrectionRule(BaseModel):
    """How outcomes of one (configuration, round type) become key bits or a verdict."""
    configuration: Configuration
    round_type: RoundType
    setting: Tuple[PauliBasis, ...]
    key_corrections: Optional[Dict[int, KeyCorrection]] = None
    verification: Optional[ParityRelation] = None

    class Config:
        frozen = True

    @property
    def participants(self) -> Tuple[int, int, int]:
        return self.configuration.participants

    @property
    def np_qubit(self) -> int:
        return self.configuration.np_qubit

    def key_bits(self, outcomes: Sequence[int]) -> Tuple[int, int, int]:
        if self.key_corrections is None:
            raise ContractError("verification rounds carry no key bits")
        flips = self.key_corrections[outcomes[self.np_qubit]].flips
        return tuple(outcome_bit(outcomes[q]) ^ f for q, f in zip(self.participants, flips))

    def is_success(self, outcomes: Sequence[int]) -> bool:
        if self.round_type is RoundType.KEYGEN:
            a, b, c = self.key_bits(outcomes)
            return a == b == c
        return self.verification.holds(outcomes)

    def success_table(self) -> np.ndarray:
        """Success flag for every outcome index."""
        return np.array([self.is_success(o) for o in outcome_signs(NUM_QUBITS)], dtype=bool)

    def uniform_success_probability(self) -> float:
        """Success probability when all outcomes are equally likely."""
        return float(self.success_table().mean())


# ══════════════════════════════════════════════════════════════════════════════
#  RULES
# ══════════════════════════════════════════════════════════════════════════════

def derive_correction_rule(
    configuration: Configuration,
    round_type: RoundType,
    state: Optional[StateVector] = None,
) -> CorrectionRule:
    """
    Find the deterministic parity behind a setting by enumerating the ideal state.

    Key generation: for each NP outcome the pairwise products A*B and A*C must be
    constant. Verification: the smallest qubit subset with a constant outcome
    product. Raises ModelError when no such relation exists, which means the
    settings do not match the state.
    """
    configuration = Configuration(configuration)
    round_type = RoundType(round_type)
    state = state if state is not None else build_lab_state()
    if state.num_qubits != NUM_QUBITS:
        raise ContractError(f"correction rules are defined on {NUM_QUBITS} qubits")

    setting = settings_for(configuration, round_type)
    probs = outcome_distribution(state, setting)
    support = outcome_signs(NUM_QUBITS)[probs > SUPPORT_TOL]

    if round_type is RoundType.KEYGEN:
        a, b, c = configuration.participants
        corrections = {}
        for m in (1, -1):
            rows = support[support[:, configuration.np_qubit] == m]
            ab = np.unique(rows[:, a] * rows[:, b])
            ac = np.unique(rows[:, a] * rows[:, c])
            if ab.size != 1 or ac.size != 1:
                raise ModelError(
                    f"no deterministic key parity for {configuration.label} "
                    f"({format_setting(setting)}) when the NP announces {m:+d}"
                )
            corrections[m] = KeyCorrection(np_outcome=m, sign_ab=int(ab[0]), sign_ac=int(ac[0]))
        return CorrectionRule(
            configuration=configuration, round_type=round_type,
            setting=setting, key_corrections=corrections,
        )

    for size in range(1, NUM_QUBITS + 1):
        for subset in combinations(range(NUM_QUBITS), size):
            products = np.unique(np.prod(support[:, list(subset)], axis=1))
            if products.size == 1:
                relation = ParityRelation(qubits=subset, sign=int(products[0]))
                return CorrectionRule(
                    configuration=configuration, round_type=round_type,
                    setting=setting, verification=relation,
                )
    raise ModelError(
        f"no stabilizer sign is fixed for {configuration.label} ({format_setting(setting)})"
    )


def record_round(rule: CorrectionRule, outcomes: Sequence[int], round_index: int) -> RoundRecord:
    outcomes = tuple(int(o) for o in outcomes)
    key_bits = rule.key_bits(outcomes) if rule.round_type is RoundType.KEYGEN else None
    return RoundRecord(
        round_index=round_index,
        round_type=rule.round_type,
        outcomes=outcomes,
        np_outcome=outcomes[rule.np_qubit],
        key_bits=key_bits,
        success=rule.is_success(outcomes),
    )


def run_round(
    state: StateVector,
    configuration: Configuration,
    round_type: RoundType,
    rule: CorrectionRule,
    noise: NoiseModel,
    rng: np.random.Generator,
    round_index: int = 0,
) -> RoundRecord:
    """Sample one round and apply the correction rule."""
    if (rule.configuration, rule.round_type) != (Configuration(configuration), RoundType(round_type)):
        raise ContractError(
            f"rule for {rule.configuration.label}/{rule.round_type.value} used in a "
            f"{Configuration(configuration).label}/{RoundType(round_type).value} round"
        )
    outcomes = sample_outcomes(state, rule.setting, noise, rng)
    return record_round(rule, outcomes, round_index)


# ══════════════════════════════════════════════════════════════════════════════
#  TRANSCRIPT
# ══════════════════════════════════════════════════════════════════════════════

class PartyObservation(BaseModel):
    """What one party sees of a round: its own basis, outcome and key bit."""
    round_index: int
    round_type: RoundType
    basis: PauliBasis
    outcome: int
    key_bit: Optional[int] = None


class ProtocolTranscript(BaseModel):
    """All rounds of a run plus the three raw keys."""
    params: ProtocolParams
    noise: NoiseModel
    rounds: Tuple[RoundRecord, ...]
    key_a: Any
    key_b: Any
    key_c: Any

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @model_validator(mode="after")
    def _check_counts(self) -> "ProtocolTranscript":
        if len(self.rounds) != self.params.total_rounds:
            raise ValueError(f"{len(self.rounds)} rounds recorded, expected {self.params.total_rounds}")
        if not len(self.key_a) == len(self.key_b) == len(self.key_c) == self.num_keygen:
            raise ValueError("every key must hold one bit per key-generation round")
        return self

    @classmethod
    def from_rounds(
        cls, params: ProtocolParams, noise: NoiseModel, rounds: Sequence[RoundRecord]
    ) -> "ProtocolTranscript":
        bits = np.array(
            [r.key_bits for r in rounds if r.round_type is RoundType.KEYGEN], dtype=np.uint8
        ).reshape(-1, 3)
        keys = [np.ascontiguousarray(bits[:, i]) for i in range(3)]
        for key in keys:
            key.flags.writeable = False
        return cls(params=params, noise=noise, rounds=tuple(rounds),
                   key_a=keys[0], key_b=keys[1], key_c=keys[2])

    @property
    def num_keygen(self) -> int:
        return sum(1 for r in self.rounds if r.round_type is RoundType.KEYGEN)

    @property
    def num_verif(self) -> int:
        return len(self.rounds) - self.num_keygen

    @property
    def counts(self) -> Tuple[int, int]:
        return (self.num_keygen, self.num_verif)

    def party_view(self, qubit: int) -> List[PartyObservation]:
        """Observations of the party holding `qubit`; the configuration stays hidden."""
        if not 0 <= qubit < NUM_QUBITS:
            raise ContractError(f"no party holds qubit {qubit}")
        configuration = self.params.configuration
        settings = {rt: settings_for(configuration, rt) for rt in RoundType}
        slot = configuration.participants.index(qubit) if qubit in configuration.participants else None

        view = []
        for r in self.rounds:
            key_bit = r.key_bits[slot] if (r.key_bits is not None and slot is not None) else None
            view.append(PartyObservation(
                round_index=r.round_index,
                round_type=r.round_type,
                basis=settings[r.round_type][qubit],
                outcome=r.outcomes[qubit],
                key_bit=key_bit,
            ))
        return view


TRANSCRIPT_COLUMNS = ["round_index", "type", "o1", "o2", "o3", "o4", "np_outcome", "a", "b", "c", "success"]


def transcript_to_text(transcript: ProtocolTranscript) -> str:
    """Header comments (params, noise, key length), a column line, then one line per round."""
    lines = [
        f"# params {transcript.params.model_dump_json()}",
        f"# noise {transcript.noise.model_dump_json()}",
        f"# key_bits {transcript.num_keygen}",
        ",".join(TRANSCRIPT_COLUMNS),
    ]
    for r in transcript.rounds:
        bits = [str(b) for b in r.key_bits] if r.key_bits is not None else ["", "", ""]
        fields = [str(r.round_index), r.round_type.value, *(str(o) for o in r.outcomes),
                  str(r.np_outcome), *bits, "1" if r.success else "0"]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def transcript_from_text(text: str) -> ProtocolTranscript:
    headers: Dict[str, str] = {}
    rounds: List[RoundRecord] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            name, _, value = line[1:].strip().partition(" ")
            headers[name] = value
            continue
        fields = line.split(",")
        if fields == TRANSCRIPT_COLUMNS:
            continue
        if len(fields) != len(TRANSCRIPT_COLUMNS):
            raise ContractError(f"line {line_no}: expected {len(TRANSCRIPT_COLUMNS)} fields, got {len(fields)}")
        try:
            key_bits = tuple(int(b) for b in fields[7:10]) if fields[7] else None
            rounds.append(RoundRecord(
                round_index=int(fields[0]),
                round_type=RoundType(fields[1]),
                outcomes=tuple(int(o) for o in fields[2:6]),
                np_outcome=int(fields[6]),
                key_bits=key_bits,
                success=fields[10] == "1",
            ))
        except ValueError as exc:
            raise ContractError(f"line {line_no}: {exc}") from exc

    missing = {"params", "noise", "key_bits"} - headers.keys()
    if missing:
        raise ContractError(f"transcript header lacks {sorted(missing)}")
    transcript = ProtocolTranscript.from_rounds(
        ProtocolParams.model_validate_json(headers["params"]),
        NoiseModel.model_validate_json(headers["noise"]),
        rounds,
    )
    if transcript.num_keygen != int(headers["key_bits"]):
        raise ContractError(
            f"header announces {headers['key_bits']} key bits, rows hold {transcript.num_keygen}"
        )
    return transcript


# ══════════════════════════════════════════════════════════════════════════════
#  PROTOCOL
# ══════════════════════════════════════════════════════════════════════════════

class ConferenceKeyProtocol(BaseProtocol):
    """Runs L rounds of one network configuration on a shared seeded generator."""

    def __init__(self, params: ProtocolParams, noise: NoiseModel, state: Optional[StateVector] = None):
        super().__init__(params)
        self.params = params
        self.noise = noise
        self.state = state if state is not None else build_lab_state()
        self.rules = {rt: derive_correction_rule(params.configuration, rt, self.state) for rt in RoundType}
        self._probs = {rt: outcome_distribution(self.state, rule.setting) for rt, rule in self.rules.items()}
        self._signs = outcome_signs(NUM_QUBITS)
        self._run_type: Optional[RoundType] = None

    def _draw_round_type(self) -> RoundType:
        return RoundType.VERIFICATION if self.rng.random() < self.params.p else RoundType.KEYGEN

    def choose_round_type(self, round_index: int) -> RoundType:
        if self.params.scheduling is Scheduling.PER_RUN:
            if self._run_type is None or round_index % self.params.run_length == 0:
                self._run_type = self._draw_round_type()
            return self._run_type
        return self._draw_round_type()

    def run_round(self, round_index: int) -> RoundRecord:
        round_type = self.choose_round_type(round_index)
        index = sample_from_distribution(self._probs[round_type], self.noise, self.rng)
        return record_round(self.rules[round_type], self._signs[index], round_index)

    def run(self) -> ProtocolTranscript:
        logger.info(
            "running %d rounds of %s (p=%.4g, %s, v=%.4f)",
            self.params.total_rounds, self.params.configuration.label, self.params.p,
            self.params.scheduling.value, self.noise.effective_visibility,
        )
        transcript = ProtocolTranscript.from_rounds(self.params, self.noise, self.run_rounds())
        logger.info("%d key-generation and %d verification rounds", *transcript.counts)
        return transcript


def run_protocol(params: ProtocolParams, noise: NoiseModel) -> ProtocolTranscript:
    return ConferenceKeyProtocol(params, noise).run()


# ══════════════════════════════════════════════════════════════════════════════
#  ESTIMATION
# ══════════════════════════════════════════════════════════════════════════════

def estimate_errors(transcript: ProtocolTranscript) -> ErrorEstimate:
    """Q_keygen, pairwise rates against Alice (plus B-C) and Q_verif."""
    num_keygen, num_verif = transcript.counts
    if num_keygen == 0 or num_verif == 0:
        raise EstimationError(
            f"need rounds of both types, got {num_keygen} key-generation and {num_verif} verification"
        )
    a, b, c = transcript.key_a, transcript.key_b, transcript.key_c
    q_keygen = float(np.mean((a != b) | (a != c)))
    q_ab = float(np.mean(a != b))
    q_ac = float(np.mean(a != c))
    q_bc = float(np.mean(b != c))
    failures = sum(1 for r in transcript.rounds if r.round_type is RoundType.VERIFICATION and not r.success)
    q_verif = failures / num_verif

    std = ErrorEstimate.binomial_std
    return ErrorEstimate(
        q_keygen=q_keygen, q_keygen_ab=q_ab, q_keygen_ac=q_ac, q_keygen_bc=q_bc, q_verif=q_verif,
        num_keygen=num_keygen, num_verif=num_verif,
        std_keygen=std(q_keygen, num_keygen), std_keygen_ab=std(q_ab, num_keygen),
        std_keygen_ac=std(q_ac, num_keygen), std_keygen_bc=std(q_bc, num_keygen),
        std_verif=std(q_verif, num_verif),
    )


class SuccessRate(BaseModel):
    configuration: Configuration
    round_type: RoundType
    setting: str
    rounds: int = Field(gt=0)
    successes: int = Field(ge=0)

    @property
    def rate(self) -> float:
        return self.successes / self.rounds

    @property
    def std(self) -> float:
        return ErrorEstimate.binomial_std(self.rate, self.rounds)


def measure_success_rates(
    noise: NoiseModel,
    rounds: int,
    seed: int = 0,
    configurations: Sequence[Configuration] = tuple(Configuration),
    state: Optional[StateVector] = None,
) -> List[SuccessRate]:
    """Success rate of every (configuration, round type) over `rounds` rounds each."""
    state = state if state is not None else build_lab_state()
    rng = np.random.default_rng(seed)
    results = []
    for configuration in configurations:
        for round_type in RoundType:
            rule = derive_correction_rule(configuration, round_type, state)
            indices = sample_index_batch(outcome_distribution(state, rule.setting), noise, rng, rounds)
            successes = int(rule.success_table()[indices].sum())
            results.append(SuccessRate(
                configuration=configuration, round_type=round_type,
                setting=format_setting(rule.setting), rounds=rounds, successes=successes,
            ))
            logger.debug("%s %s: %d/%d", Configuration(configuration).label, round_type.value, successes, rounds)
    return results


def fit_visibility(
    target_success: float,
    round_type: RoundType,
    configuration: Configuration = Configuration.X2,
) -> float:
    """Visibility whose expected success rate, v + (1 - v) * s0, equals the target."""
    s0 = derive_correction_rule(configuration, round_type).uniform_success_probability()
    if not s0 <= target_success <= 1.0:
        raise DomainError(f"success rate {target_success} unreachable; white noise floor is {s0}")
    return (target_success - s0) / (1.0 - s0)


def visibility_for_pairwise_error(q: float) -> float:
    """A pair of participants disagrees with probability (1 - v) / 2."""
    if not 0.0 <= q <= 0.5:
        raise DomainError(f"pairwise error rate must be in [0, 1/2], got {q}")
    return 1.0 - 2.0 * q
