"""Tests for correction rules, the round machine and error estimation."""

import numpy as np
import pytest
from scipy import stats

from core import RoundRecord, RoundType
from core.errors import ContractError, DomainError, EstimationError, ModelError
from src.config import ProtocolParams, Scheduling
from src.protocol import (
    ConferenceKeyProtocol,
    ProtocolTranscript,
    derive_correction_rule,
    estimate_errors,
    fit_visibility,
    measure_success_rates,
    run_protocol,
    run_round,
    transcript_from_text,
    transcript_to_text,
    visibility_for_pairwise_error,
)
from src.quantum_core import NoiseModel, outcome_distribution, outcome_signs
from src.settings import Configuration

from .conftest import PAIRWISE_VISIBILITY


def _binomial_band(p: float, m: int, k: float = 3.0) -> float:
    return k * np.sqrt(p * (1 - p) / m)


# ══════════════════════════════════════════════════════════════════════════════
#  SETTINGS AND RULES
# ══════════════════════════════════════════════════════════════════════════════

class TestConfiguration:

    def test_party_layout(self):
        assert Configuration.X2.np_qubit == 1
        assert Configuration.X2.participants == (0, 2, 3)
        assert Configuration.Y3.np_qubit == 2
        assert Configuration.Y3.participants == (0, 1, 3)

    def test_np_basis(self):
        assert Configuration.Y2.np_basis.value == "Y"
        assert Configuration.X3.np_basis.value == "X"


class TestCorrectionRules:

    @pytest.mark.parametrize("configuration", list(Configuration))
    @pytest.mark.parametrize("round_type", list(RoundType))
    def test_every_ideal_outcome_succeeds(self, lab_state, configuration, round_type):
        rule = derive_correction_rule(configuration, round_type, lab_state)
        probs = outcome_distribution(lab_state, rule.setting)
        assert rule.success_table()[probs > 1e-12].all()

    def test_x2_verification_relation(self):
        rule = derive_correction_rule(Configuration.X2, RoundType.VERIFICATION)
        assert rule.verification.qubits == (0, 2, 3)
        assert rule.verification.sign == 1

    @pytest.mark.parametrize("configuration", list(Configuration))
    def test_keygen_rule_covers_both_np_outcomes(self, configuration):
        rule = derive_correction_rule(configuration, RoundType.KEYGEN)
        assert set(rule.key_corrections) == {1, -1}
        assert rule.verification is None

    def test_wrong_state_has_no_rule(self, cluster4):
        with pytest.raises(ModelError):
            derive_correction_rule(Configuration.X2, RoundType.KEYGEN, cluster4)

    @pytest.mark.parametrize("round_type, floor", [(RoundType.KEYGEN, 0.25), (RoundType.VERIFICATION, 0.5)])
    def test_uniform_success_probability(self, round_type, floor):
        for configuration in Configuration:
            rule = derive_correction_rule(configuration, round_type)
            assert rule.uniform_success_probability() == pytest.approx(floor)

    def test_key_bits_agree_on_ideal_support(self, lab_state):
        rule = derive_correction_rule(Configuration.Y2, RoundType.KEYGEN, lab_state)
        probs = outcome_distribution(lab_state, rule.setting)
        for outcome in outcome_signs(4)[probs > 1e-12]:
            a, b, c = rule.key_bits(outcome)
            assert a == b == c

    def test_verification_rule_has_no_key_bits(self):
        rule = derive_correction_rule(Configuration.X3, RoundType.VERIFICATION)
        with pytest.raises(ContractError):
            rule.key_bits((1, 1, 1, 1))

    def test_run_round_rejects_mismatched_rule(self, lab_state, rng):
        rule = derive_correction_rule(Configuration.X2, RoundType.KEYGEN, lab_state)
        with pytest.raises(ContractError):
            run_round(lab_state, Configuration.X2, RoundType.VERIFICATION, rule, NoiseModel.ideal(), rng)

    def test_run_round_keygen_record(self, lab_state, rng):
        rule = derive_correction_rule(Configuration.X3, RoundType.KEYGEN, lab_state)
        record = run_round(lab_state, Configuration.X3, RoundType.KEYGEN, rule, NoiseModel.ideal(), rng, 7)
        assert record.round_index == 7
        assert record.success
        assert record.np_outcome == record.outcomes[2]
        assert len(set(record.key_bits)) == 1


# ══════════════════════════════════════════════════════════════════════════════
#  ROUND MACHINE
# ══════════════════════════════════════════════════════════════════════════════

class TestProtocolRun:

    @pytest.mark.parametrize("configuration", list(Configuration))
    def test_ideal_rounds_always_succeed(self, configuration):
        params = ProtocolParams(total_rounds=10_000, p=0.5, configuration=configuration, random_seed=3)
        transcript = run_protocol(params, NoiseModel.ideal())
        assert all(r.success for r in transcript.rounds)
        np.testing.assert_array_equal(transcript.key_a, transcript.key_b)
        np.testing.assert_array_equal(transcript.key_a, transcript.key_c)
        assert min(transcript.counts) > 0

    def test_verification_fraction(self):
        params = ProtocolParams(total_rounds=44827, p=0.1, random_seed=11)
        transcript = run_protocol(params, NoiseModel.ideal())
        fraction = transcript.num_verif / params.total_rounds
        assert abs(fraction - 0.1) < _binomial_band(0.1, params.total_rounds)
        assert all(r.success for r in transcript.rounds)

    def test_same_seed_same_transcript(self):
        params = ProtocolParams(total_rounds=2000, p=0.2, random_seed=42)
        noise = NoiseModel.white(0.7)
        assert transcript_to_text(run_protocol(params, noise)) == transcript_to_text(run_protocol(params, noise))

    def test_different_seed_different_keys(self):
        noise = NoiseModel.ideal()
        a = run_protocol(ProtocolParams(total_rounds=500, random_seed=1), noise)
        b = run_protocol(ProtocolParams(total_rounds=500, random_seed=2), noise)
        assert not np.array_equal(a.key_a[:100], b.key_a[:100])

    def test_per_run_scheduling(self):
        params = ProtocolParams(
            total_rounds=1000, p=0.5, scheduling=Scheduling.PER_RUN, run_length=100, random_seed=5
        )
        transcript = run_protocol(params, NoiseModel.ideal())
        types = [r.round_type for r in transcript.rounds]
        for start in range(0, 1000, 100):
            assert len(set(types[start:start + 100])) == 1

    def test_party_view_hides_np_key(self):
        params = ProtocolParams(total_rounds=300, configuration=Configuration.X2, random_seed=8)
        transcript = run_protocol(params, NoiseModel.ideal())
        np_view = transcript.party_view(1)
        assert all(obs.key_bit is None for obs in np_view)
        alice_bits = [obs.key_bit for obs in transcript.party_view(0) if obs.round_type is RoundType.KEYGEN]
        np.testing.assert_array_equal(alice_bits, transcript.key_a)
        with pytest.raises(ContractError):
            transcript.party_view(4)

    def test_keys_are_read_only(self):
        transcript = run_protocol(ProtocolParams(total_rounds=50, random_seed=0), NoiseModel.ideal())
        with pytest.raises(ValueError):
            transcript.key_a[0] = 1


class TestTranscriptText:

    def test_round_trip(self):
        params = ProtocolParams(total_rounds=400, p=0.25, configuration=Configuration.Y3, random_seed=4)
        transcript = run_protocol(params, NoiseModel.white(0.6))
        restored = transcript_from_text(transcript_to_text(transcript))
        assert restored.params == transcript.params
        assert restored.noise == transcript.noise
        assert restored.rounds == transcript.rounds
        np.testing.assert_array_equal(restored.key_c, transcript.key_c)

    def test_header_line(self):
        transcript = run_protocol(ProtocolParams(total_rounds=20, random_seed=0), NoiseModel.ideal())
        lines = transcript_to_text(transcript).splitlines()
        assert lines[0].startswith("# params ")
        assert lines[3] == "round_index,type,o1,o2,o3,o4,np_outcome,a,b,c,success"
        assert len(lines) == 4 + 20

    def test_malformed_row(self):
        transcript = run_protocol(ProtocolParams(total_rounds=10, random_seed=0), NoiseModel.ideal())
        text = transcript_to_text(transcript) + "10,keygen,1,1\n"
        with pytest.raises(ContractError):
            transcript_from_text(text)

    def test_missing_header(self):
        with pytest.raises(ContractError):
            transcript_from_text("round_index,type,o1,o2,o3,o4,np_outcome,a,b,c,success\n")


# ══════════════════════════════════════════════════════════════════════════════
#  ESTIMATION
# ══════════════════════════════════════════════════════════════════════════════

def _transcript(verif_failures, verif_total, key_bits):
    rounds = []
    for i in range(verif_total):
        rounds.append(RoundRecord(
            round_index=len(rounds), round_type=RoundType.VERIFICATION,
            outcomes=(1, 1, 1, 1), np_outcome=1, success=i >= verif_failures,
        ))
    for bits in key_bits:
        rounds.append(RoundRecord(
            round_index=len(rounds), round_type=RoundType.KEYGEN, outcomes=(1, 1, 1, 1),
            np_outcome=1, key_bits=bits, success=len(set(bits)) == 1,
        ))
    params = ProtocolParams(total_rounds=len(rounds))
    return ProtocolTranscript.from_rounds(params, NoiseModel.ideal(), rounds)


class TestEstimation:

    def test_rates_from_counts(self):
        key_bits = [(0, 0, 0)] * 6 + [(0, 1, 0), (1, 1, 0), (0, 0, 1), (1, 0, 0)]
        estimate = estimate_errors(_transcript(33, 294, key_bits))
        assert estimate.q_verif == pytest.approx(33 / 294)
        assert estimate.q_verif == pytest.approx(0.1122, abs=1e-4)
        assert estimate.q_keygen == pytest.approx(0.4)
        assert estimate.q_keygen_ab == pytest.approx(0.2)
        assert estimate.q_keygen_ac == pytest.approx(0.3)
        assert estimate.q_keygen_bc == pytest.approx(0.3)
        assert estimate.q_keygen_max == pytest.approx(0.3)
        assert estimate.std_verif == pytest.approx(np.sqrt((33 / 294) * (261 / 294) / 294))

    def test_no_verification_rounds(self):
        with pytest.raises(EstimationError):
            estimate_errors(_transcript(0, 0, [(0, 0, 0)] * 5))

    def test_no_keygen_rounds(self):
        with pytest.raises(EstimationError):
            estimate_errors(_transcript(1, 5, []))

    def test_counts_match_rounds(self):
        transcript = _transcript(2, 10, [(1, 1, 1)] * 4)
        assert transcript.counts == (4, 10)


class TestWhiteNoise:

    def test_fitted_visibilities(self):
        assert fit_visibility(0.8776, RoundType.KEYGEN) == pytest.approx(0.8368, abs=1e-4)
        assert fit_visibility(0.8701, RoundType.VERIFICATION) == pytest.approx(0.7402, abs=1e-4)
        assert visibility_for_pairwise_error(0.0959) == pytest.approx(PAIRWISE_VISIBILITY)

    def test_unreachable_success_rate(self):
        with pytest.raises(DomainError):
            fit_visibility(0.2, RoundType.KEYGEN)
        with pytest.raises(DomainError):
            visibility_for_pairwise_error(0.7)

    @pytest.mark.parametrize("round_type, target", [(RoundType.KEYGEN, 0.8776), (RoundType.VERIFICATION, 0.8701)])
    def test_fitted_success_rates(self, round_type, target):
        noise = NoiseModel.white(fit_visibility(target, round_type))
        rounds = 100_000
        results = measure_success_rates(noise, rounds, seed=2024, configurations=[Configuration.X2])
        rate = next(r for r in results if r.round_type is round_type)
        assert abs(rate.rate - target) < _binomial_band(target, rounds)

    def test_ideal_survey_is_perfect(self):
        results = measure_success_rates(NoiseModel.ideal(), 10_000, seed=1)
        assert len(results) == 8
        assert all(r.successes == r.rounds for r in results)
        assert {r.setting for r in results} >= {"XXZZ", "ZXXX", "ZZYY", "XXYZ"}

    def test_configurations_indistinguishable(self):
        """Two-proportion z-test of each configuration against X2 under the same noise."""
        rounds = 100_000
        results = measure_success_rates(NoiseModel.white(0.8), rounds, seed=77)
        for round_type in RoundType:
            by_config = {r.configuration: r for r in results if r.round_type is round_type}
            reference = by_config[Configuration.X2]
            for configuration in (Configuration.Y2, Configuration.X3, Configuration.Y3):
                other = by_config[configuration]
                pooled = (reference.successes + other.successes) / (2 * rounds)
                z = (reference.rate - other.rate) / np.sqrt(pooled * (1 - pooled) * 2 / rounds)
                assert 2 * stats.norm.sf(abs(z)) > 0.001, (configuration, round_type)

    def test_noisy_success_rounds_agree(self):
        params = ProtocolParams(total_rounds=5000, p=0.2, random_seed=8)
        transcript = run_protocol(params, NoiseModel.white(0.6))
        keygen = [r for r in transcript.rounds if r.round_type is RoundType.KEYGEN]
        assert any(not r.success for r in keygen)
        for record in keygen:
            assert record.success == (len(set(record.key_bits)) == 1)

    def test_total_error_bounds_pairwise_errors(self):
        visibility = 0.7
        params = ProtocolParams(total_rounds=20000, p=0.1, random_seed=21)
        estimate = estimate_errors(run_protocol(params, NoiseModel.white(visibility)))
        assert estimate.q_keygen >= estimate.q_keygen_max
        assert estimate.q_keygen >= estimate.q_keygen_bc
        expected = 0.75 * (1 - visibility)
        assert abs(estimate.q_keygen - expected) < _binomial_band(expected, estimate.num_keygen)

    def test_estimates_at_pairwise_fit(self):
        """Short verification-poor run, as in the 294-round data set."""
        params = ProtocolParams(total_rounds=11108, p=0.02, random_seed=17)
        transcript = run_protocol(params, NoiseModel.white(PAIRWISE_VISIBILITY))
        estimate = estimate_errors(transcript)
        expected = (1 - PAIRWISE_VISIBILITY) / 2
        assert abs(estimate.q_verif - expected) < _binomial_band(expected, estimate.num_verif)
        assert estimate.q_verif < 0.112 + 3 * 0.018
        for q in (estimate.q_keygen_ab, estimate.q_keygen_ac):
            assert abs(q - 0.0959) < _binomial_band(0.0959, estimate.num_keygen)
