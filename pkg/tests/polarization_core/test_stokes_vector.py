import math

import numpy as np
import pytest

from bb84sim import InvalidStateError, JonesVector, StokesVector
from bb84sim.polarization import (analyzer_arms, analyzer_transmission,
                                  degree_of_polarization, jones_to_stokes,
                                  stokes_dop)

pytestmark = pytest.mark.smoke


def test_horizontal_jones_maps_to_plus_s1():
    s = jones_to_stokes(JonesVector(1.0, 0.0))
    assert s.as_array() == pytest.approx([1.0, 1.0, 0.0, 0.0])


def test_diagonal_jones_maps_to_plus_s2():
    s = jones_to_stokes(JonesVector(1.0, 1.0).normalized())
    assert s.as_array() == pytest.approx([1.0, 0.0, 1.0, 0.0])


def test_right_circular_is_plus_s3():
    s = jones_to_stokes(JonesVector(1.0, 1j).normalized())
    assert s.s3 == pytest.approx(1.0)
    assert s.s1 == pytest.approx(0.0, abs=1e-12)


def test_zero_jones_vector_is_rejected():
    with pytest.raises(InvalidStateError):
        jones_to_stokes(JonesVector(0.0, 0.0))
    with pytest.raises(InvalidStateError):
        JonesVector(0.0, 0.0).normalized()


def test_stokes_cone_is_enforced():
    with pytest.raises(InvalidStateError):
        StokesVector(1.0, 1.0, 0.5, 0.0)
    with pytest.raises(InvalidStateError):
        StokesVector(-1.0, 0.0, 0.0, 0.0)
    with pytest.raises(InvalidStateError):
        StokesVector(math.nan, 0.0, 0.0, 0.0)


def test_dop_of_unpolarized_and_partial_light():
    assert degree_of_polarization(StokesVector.unpolarized(2.0)) == 0.0
    s = StokesVector.from_axis([0.0, 0.0, 1.0], power=2.0, dop=0.25)
    assert degree_of_polarization(s) == pytest.approx(0.25)
    with pytest.raises(InvalidStateError):
        degree_of_polarization(StokesVector(0.0, 0.0, 0.0, 0.0))


def test_analyzer_arms_sum_to_total_power():
    s = StokesVector(2.0, 0.6, -0.8, 1.0)
    passed, blocked = analyzer_arms(s, [0.0, 1.0, 0.0])
    assert passed + blocked == pytest.approx(2.0)
    assert passed == pytest.approx(0.5 * (2.0 - 0.8))


def test_orthogonal_state_is_fully_blocked():
    s = StokesVector.from_axis([1.0, 0.0, 0.0])
    assert analyzer_transmission(s, [-1.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)
    assert analyzer_transmission(s, [0.0, 0.0, 1.0]) == pytest.approx(0.5)


def test_rowwise_dop_handles_dark_rows():
    dop = stokes_dop(np.array([[1.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 0.0],
                               [2.0, 1.0, 0.0, 0.0]]))
    assert dop == pytest.approx([1.0, 0.0, 0.5])
