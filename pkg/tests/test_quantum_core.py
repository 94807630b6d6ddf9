"""Tests for the state-vector simulator and measurement sampling."""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from core.errors import ContractError, QubitIndexError, SizeError
from core.schemas import RoundType
from src.quantum_core import (
    LAB_FRAME_GATES,
    NoiseModel,
    PauliBasis,
    StateVector,
    apply_cz,
    apply_local_gate,
    build_linear_cluster,
    build_plus_state,
    conjugate_setting,
    flip_outcomes,
    format_setting,
    outcome_distribution,
    outcome_from_index,
    outcome_signs,
    outcome_to_index,
    parse_setting,
    sample_from_distribution,
    sample_outcome_batch,
    sample_outcomes,
)
from src.settings import Configuration, settings_for


# ══════════════════════════════════════════════════════════════════════════════
#  STATE PREPARATION
# ══════════════════════════════════════════════════════════════════════════════

class TestStatePreparation:

    @pytest.mark.parametrize("n", [1, 3, 12])
    def test_plus_state_is_uniform(self, n):
        state = build_plus_state(n)
        np.testing.assert_allclose(state.amplitudes, np.full(2 ** n, 2.0 ** (-n / 2)))

    @pytest.mark.parametrize("n", [0, 13])
    def test_plus_state_size_limits(self, n):
        with pytest.raises(SizeError):
            build_plus_state(n)

    def test_cluster_needs_two_qubits(self):
        with pytest.raises(SizeError):
            build_linear_cluster(1)

    def test_two_qubit_cluster(self):
        state = build_linear_cluster(2)
        np.testing.assert_allclose(state.amplitudes, np.array([1, 1, 1, -1]) / 2)

    def test_cz_is_an_involution(self):
        state = build_plus_state(3)
        twice = apply_cz(apply_cz(state, 0, 2), 0, 2)
        np.testing.assert_allclose(twice.amplitudes, state.amplitudes)

    def test_cz_is_symmetric(self):
        state = build_plus_state(3)
        np.testing.assert_allclose(apply_cz(state, 0, 1).amplitudes, apply_cz(state, 1, 0).amplitudes)

    @pytest.mark.parametrize("i, j", [(0, 0), (0, 4), (-1, 1)])
    def test_cz_rejects_bad_indices(self, i, j):
        with pytest.raises(QubitIndexError):
            apply_cz(build_plus_state(4), i, j)

    def test_unknown_gate(self):
        with pytest.raises(ContractError):
            apply_local_gate(build_plus_state(2), "T", 0)

    def test_cluster_stabilizers(self, cluster4):
        """X_i Z_(i-1) Z_(i+1) leaves the linear cluster unchanged."""
        for i in range(4):
            state = apply_local_gate(cluster4, "X", i)
            for j in (i - 1, i + 1):
                if 0 <= j < 4:
                    state = apply_local_gate(state, "Z", j)
            np.testing.assert_allclose(state.amplitudes, cluster4.amplitudes, atol=1e-12)

    def test_lab_state_amplitudes(self, lab_state):
        expected = np.zeros(16, dtype=complex)
        expected[[0b0101, 0b0110, 0b1001, 0b1010]] = [0.5, 0.5, -0.5, 0.5]
        assert lab_state.equals_up_to_phase(StateVector.from_amplitudes(expected))

    def test_global_phase_is_ignored(self, cluster4):
        rotated = StateVector.from_amplitudes(-1j * cluster4.amplitudes)
        assert cluster4.equals_up_to_phase(rotated)
        assert not cluster4.equals_up_to_phase(build_plus_state(4))

    def test_unnormalized_state_rejected(self):
        with pytest.raises(ValidationError):
            StateVector(num_qubits=1, amplitudes=[1.0, 1.0])

    def test_amplitude_count_must_be_power_of_two(self):
        with pytest.raises(SizeError):
            StateVector.from_amplitudes(np.ones(3) / np.sqrt(3))

    def test_amplitudes_are_read_only(self, cluster4):
        with pytest.raises(ValueError):
            cluster4.amplitudes[0] = 0


# ══════════════════════════════════════════════════════════════════════════════
#  MEASUREMENT
# ══════════════════════════════════════════════════════════════════════════════

class TestMeasurement:

    def test_setting_text_round_trip(self):
        assert format_setting(parse_setting("xyZz")) == "XYZZ"

    def test_outcome_index_round_trip(self):
        for index in range(16):
            assert outcome_to_index(outcome_from_index(index, 4)) == index

    def test_outcome_signs_msb_first(self):
        signs = outcome_signs(2)
        np.testing.assert_array_equal(signs, [[1, 1], [1, -1], [-1, 1], [-1, -1]])

    def test_distribution_is_normalized(self, lab_state):
        for configuration in Configuration:
            for round_type in RoundType:
                probs = outcome_distribution(lab_state, settings_for(configuration, round_type))
                assert probs.shape == (16,)
                assert probs.sum() == pytest.approx(1.0)

    def test_x_measurement_of_plus_state(self):
        probs = outcome_distribution(build_plus_state(3), parse_setting("XXX"))
        np.testing.assert_allclose(probs, np.eye(8)[0], atol=1e-12)

    def test_y_measurement_of_plus_i(self):
        state = apply_local_gate(build_plus_state(1), "S", 0)
        np.testing.assert_allclose(outcome_distribution(state, [PauliBasis.Y]), [1.0, 0.0], atol=1e-12)

    def test_z_measurement_of_plus_state(self):
        np.testing.assert_allclose(outcome_distribution(build_plus_state(2), parse_setting("ZZ")), 0.25)

    def test_setting_length_mismatch(self, lab_state):
        with pytest.raises(ContractError):
            outcome_distribution(lab_state, parse_setting("XXZ"))

    def test_ideal_sampling_follows_support(self, rng):
        probs = np.zeros(8)
        probs[5] = 1.0
        draws = {sample_from_distribution(probs, NoiseModel.ideal(), rng) for _ in range(200)}
        assert draws == {5}

    def test_zero_visibility_is_uniform(self, rng):
        probs = np.zeros(16)
        probs[0] = 1.0
        draws = [sample_from_distribution(probs, NoiseModel.white(0.0), rng) for _ in range(16000)]
        counts = np.bincount(draws, minlength=16)
        assert stats.chisquare(counts).pvalue > 0.001

    def test_sample_outcomes_are_signs(self, lab_state, rng):
        outcome = sample_outcomes(lab_state, parse_setting("XXZZ"), NoiseModel.ideal(), rng)
        assert len(outcome) == 4
        assert set(outcome) <= {1, -1}

    def test_batch_matches_ideal_support(self, lab_state, rng):
        setting = parse_setting("ZZZZ")
        batch = sample_outcome_batch(lab_state, setting, NoiseModel.ideal(), rng, 500)
        assert batch.shape == (500, 4)
        support = {outcome_from_index(i, 4) for i in np.flatnonzero(outcome_distribution(lab_state, setting))}
        assert {tuple(int(o) for o in row) for row in batch} <= support

    @pytest.mark.parametrize("configuration", list(Configuration))
    @pytest.mark.parametrize("round_type", list(RoundType))
    def test_batch_frequencies_follow_distribution(self, lab_state, configuration, round_type):
        setting = settings_for(configuration, round_type)
        visibility, size = 0.7, 100_000
        expected = visibility * outcome_distribution(lab_state, setting) + (1 - visibility) / 16
        batch = sample_outcome_batch(lab_state, setting, NoiseModel.white(visibility),
                                     np.random.default_rng(31), size)
        indices = (batch == -1).astype(np.int64) @ (1 << np.arange(3, -1, -1))
        counts = np.bincount(indices, minlength=16)
        assert stats.chisquare(counts, expected * size).pvalue > 0.001

    def test_single_draw_frequencies_follow_distribution(self, lab_state):
        setting = parse_setting("XXZZ")
        visibility, size = 0.7, 100_000
        expected = visibility * outcome_distribution(lab_state, setting) + (1 - visibility) / 16
        rng = np.random.default_rng(32)
        noise = NoiseModel.white(visibility)
        counts = np.zeros(16, dtype=np.int64)
        for _ in range(size):
            counts[outcome_to_index(sample_outcomes(lab_state, setting, noise, rng))] += 1
        assert stats.chisquare(counts, expected * size).pvalue > 0.001

    def test_same_seed_same_samples(self, lab_state):
        setting = parse_setting("XXZZ")
        noise = NoiseModel.white(0.5)
        a = sample_outcome_batch(lab_state, setting, noise, np.random.default_rng(9), 100)
        b = sample_outcome_batch(lab_state, setting, noise, np.random.default_rng(9), 100)
        np.testing.assert_array_equal(a, b)


# ══════════════════════════════════════════════════════════════════════════════
#  LOCAL EQUIVALENCE
# ══════════════════════════════════════════════════════════════════════════════

class TestLocalEquivalence:

    @pytest.mark.parametrize("configuration", list(Configuration))
    @pytest.mark.parametrize("round_type", list(RoundType))
    def test_lab_statistics_from_cluster(self, lab_state, cluster4, configuration, round_type):
        setting = settings_for(configuration, round_type)
        bases, signs = conjugate_setting(setting, LAB_FRAME_GATES)
        expected = flip_outcomes(outcome_distribution(cluster4, bases), signs)
        np.testing.assert_allclose(outcome_distribution(lab_state, setting), expected, atol=1e-12)

    def test_hadamard_swaps_x_and_z(self):
        bases, signs = conjugate_setting(parse_setting("XZY"), ("H", "H", "H"))
        assert format_setting(bases) == "ZXY"
        assert signs == (1, 1, -1)

    def test_unsupported_gate(self):
        with pytest.raises(ContractError):
            conjugate_setting(parse_setting("X"), ("S",))
