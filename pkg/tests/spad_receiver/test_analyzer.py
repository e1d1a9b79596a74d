import math

import numpy as np
import pytest

from bb84sim import (AlignmentError, AnalyzerConfig, BasisSet, Bb84State,
                     PoincareRotation, ScenarioConfigError, StokesVector,
                     align_compensation)
from bb84sim.receiver import align_frame, classical_trace, received_trace


def test_arm_intensities_sum_to_power():
    analyzer = AnalyzerConfig.for_basis_set(BasisSet.HV_DA)
    stokes = np.array([[2.0, 1.0, 0.5, -0.5], [1.0, 0.0, 0.0, 0.0]])
    arms = analyzer.arm_intensities(stokes, 1)
    assert arms.sum(axis=1) == pytest.approx([2.0, 1.0])
    assert arms[0] == pytest.approx([1.25, 0.75])
    assert arms[1] == pytest.approx([0.5, 0.5])


def test_conjugate_basis_gives_even_split():
    analyzer = AnalyzerConfig.for_basis_set(BasisSet.DA_RL)
    arms = analyzer.arm_intensities(Bb84State.R.stokes.as_array(), 0)
    assert arms[0] == pytest.approx([0.5, 0.5])


def test_non_orthogonal_bases_are_rejected():
    with pytest.raises(ScenarioConfigError):
        AnalyzerConfig(((1.0, 0.0, 0.0), (1.0, 1.0, 0.0)))


def test_compensation_undoes_a_channel_rotation():
    channel = PoincareRotation.about_axis([0.3, -0.5, 0.8], 1.9)
    received = channel.matrix @ Bb84State.H.axis
    comp = align_compensation(StokesVector.from_axis(received, dop=0.7), Bb84State.H.axis)
    assert comp.matrix @ received == pytest.approx(Bb84State.H.axis, abs=1e-9)


def test_alignment_needs_polarized_reference():
    with pytest.raises(AlignmentError):
        align_compensation(StokesVector.unpolarized(), [1.0, 0.0, 0.0])


def test_two_reference_alignment_recovers_the_frame():
    channel = PoincareRotation.about_axis([0.2, 0.9, -0.4], 2.3)
    h_out = StokesVector.from_axis(channel.matrix @ Bb84State.H.axis)
    d_out = StokesVector.from_axis(channel.matrix @ Bb84State.D.axis)
    comp = align_frame(h_out, Bb84State.H.axis, d_out, Bb84State.D.axis)
    assert comp.matrix @ channel.matrix == pytest.approx(np.eye(3), abs=1e-9)


def test_collinear_second_reference_falls_back_to_minimal_rotation():
    h = StokesVector.from_axis([1.0, 0.0, 0.0])
    comp = align_frame(h, [0.0, 0.0, 1.0], h, [0.0, 1.0, 0.0])
    assert comp == align_compensation(h, [0.0, 0.0, 1.0])


def test_classical_and_received_traces():
    trace = classical_trace([Bb84State.D, Bb84State.R, Bb84State.A], [0.0, 1.0, 0.0], 4)
    assert trace.tolist() == [1.0] * 4 + [0.0] * 4 + [-1.0] * 4
    partial = StokesVector.from_axis([0.0, 1.0, 0.0], power=2.0, dop=0.5)
    levels = received_trace([partial], [0.0, 1.0, 0.0], 2)
    assert levels == pytest.approx([0.5, 0.5])
    with pytest.raises(ScenarioConfigError):
        classical_trace([Bb84State.D], [0.0, 1.0, 0.0], 0)
    assert math.isclose(received_trace([StokesVector(0.0, 0, 0, 0)], [1, 0, 0], 1)[0], 0.0)


def test_four_states_give_three_levels_in_one_basis():
    states = list(BasisSet.HV_DA.states) * 3
    trace = classical_trace(states, Bb84State.H.axis, 8)
    assert sorted(set(trace.tolist())) == [-1.0, 0.0, 1.0]


def test_received_levels_shrink_with_the_dop():
    levels = []
    for dop in (1.0, 0.8, 0.4):
        states = [StokesVector.from_axis(Bb84State.H.axis, dop=dop),
                  StokesVector.from_axis(Bb84State.V.axis, dop=dop)]
        trace = received_trace(states, Bb84State.H.axis, 1)
        levels.append(trace[0] - trace[1])
    assert levels == pytest.approx([2.0, 1.6, 0.8])
