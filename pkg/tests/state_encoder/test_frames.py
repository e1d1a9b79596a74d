import numpy as np
import pytest

from bb84sim import BasisSet, Bb84State, ScenarioConfigError, SymbolFrame, prbs_frame
from bb84sim.encoder import carve, encode_state, frame_states

pytestmark = pytest.mark.smoke


def test_prbs_frame_is_reproducible():
    a = prbs_frame(15, 1000, 1e8, 0.1, seed=5)
    b = prbs_frame(15, 1000, 1e8, 0.1, seed=5)
    c = prbs_frame(15, 1000, 1e8, 0.1, seed=6)
    assert np.array_equal(a.basis, b.basis) and np.array_equal(a.bits, b.bits)
    assert not np.array_equal(a.bits, c.bits)
    assert len(a) == 1000
    assert a.symbol_period_s == pytest.approx(1e-8)


def test_full_period_frame_is_balanced():
    frame = prbs_frame(11, 2047, 1e9, 0.1, seed=0)
    assert abs(frame.basis.mean() - 0.5) < 0.02
    assert abs(frame.bits.mean() - 0.5) < 0.02


def test_frame_arrays_are_read_only():
    frame = prbs_frame(7, 20, 1e8, 0.1, seed=1)
    with pytest.raises(ValueError):
        frame.bits[0] = 1


def test_state_mapping_of_both_basis_sets():
    assert encode_state(0, 0, BasisSet.HV_DA) is Bb84State.H
    assert encode_state(0, 1, BasisSet.HV_DA) is Bb84State.V
    assert encode_state(1, 1, BasisSet.HV_DA) is Bb84State.A
    assert encode_state(0, 0, BasisSet.DA_RL) is Bb84State.D
    assert encode_state(1, 0, BasisSet.DA_RL) is Bb84State.R
    assert encode_state(1, 1, BasisSet.DA_RL) is Bb84State.L


def test_labels_follow_state_indices():
    frame = SymbolFrame(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), 1e8, 0.1, 7)
    assert frame.labels(BasisSet.HV_DA) == ["H", "V", "D", "A"]
    assert frame_states(frame, BasisSet.DA_RL) == [Bb84State.D, Bb84State.A,
                                                   Bb84State.R, Bb84State.L]
    assert frame.symbols == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_bad_frames_are_rejected():
    with pytest.raises(ScenarioConfigError):
        prbs_frame(15, 1, 1e8, 0.1, seed=0)
    with pytest.raises(ScenarioConfigError):
        SymbolFrame(np.array([0, 1]), np.array([0]), 1e8, 0.1, 7)
    with pytest.raises(ScenarioConfigError):
        SymbolFrame(np.array([0]), np.array([0]), 0.0, 0.1, 7)


def test_carving_gate_window_and_emission_times():
    frame = prbs_frame(7, 10, 1e9, 0.1, seed=0)
    gate = carve(frame, 0.5)
    assert gate.window_s == pytest.approx(0.5e-9)
    assert gate.window(3) == pytest.approx((3.25e-9, 3.75e-9))
    times = gate.emission_times(np.full(1000, 3), np.random.default_rng(0))
    assert times.min() >= 3.25e-9 and times.max() <= 3.75e-9
    with pytest.raises(ScenarioConfigError):
        carve(frame, 0.0)


def test_carving_does_not_change_photon_number():
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    frame = prbs_frame(7, 10, 1e9, 0.1, seed=0)
    idx_wide, _ = carve(frame, 1.0).photon_arrivals(50_000, 0.1, rng_a)
    idx_narrow, _ = carve(frame, 0.2).photon_arrivals(50_000, 0.1, rng_b)
    assert np.array_equal(idx_wide, idx_narrow)
