import math

import numpy as np
import pytest

from bb84sim import (Bb84State, SourceSpectrum, StokesVector, build_fiber,
                     concatenate, degree_of_polarization, ensemble_mean,
                     propagate, slice_spectrum)
from bb84sim.fiber import default_segment_count, propagate_stokes
from bb84sim.polarization import stokes_dop

pytestmark = pytest.mark.smoke


def _polarized_ensemble(width_nm, n=64, state=Bb84State.H):
    ensemble = slice_spectrum(SourceSpectrum(center_nm=1578.0, width_nm=width_nm), n, mu=0.1)
    return ensemble.with_stokes(np.tile(state.stokes.as_array(), (n, 1)))


def test_zero_length_fiber_is_identity():
    fiber = build_fiber(0.0, pmd_coeff_ps_sqrtkm=5.0, seed=3)
    ensemble = _polarized_ensemble(10.0)
    out = propagate(ensemble, fiber)
    assert np.allclose(out.stokes, ensemble.stokes)
    assert out.mu == pytest.approx(ensemble.mu)
    assert fiber.rotation_at(1550.0).matrix == pytest.approx(np.eye(3))


def test_attenuation_scales_mu_only():
    fiber = build_fiber(10.0, atten_db_per_km=0.2, seed=1)
    out = propagate(_polarized_ensemble(1.0), fiber)
    assert fiber.transmittance == pytest.approx(10 ** -0.2)
    assert out.mu == pytest.approx(0.1 * 10 ** -0.2)
    assert out.weights.sum() == pytest.approx(1.0)


def test_total_dgd_follows_sqrt_length_scaling():
    for length in (0.25, 1.0, 4.0, 25.0):
        fiber = build_fiber(length, pmd_coeff_ps_sqrtkm=1.3, seed=11)
        assert fiber.total_dgd_ps == pytest.approx(1.3 * math.sqrt(length))
    assert default_segment_count(3.2) == 16
    assert default_segment_count(40.5) == 41


def test_same_seed_gives_same_fiber():
    a = build_fiber(2.0, seed=5)
    b = build_fiber(2.0, seed=5)
    assert np.array_equal(a.axes, b.axes)
    assert np.array_equal(a.dgd_ps, b.dgd_ps)
    assert not np.array_equal(a.axes, build_fiber(2.0, seed=6).axes)


def test_per_slice_dop_is_preserved():
    fiber = build_fiber(5.0, pmd_coeff_ps_sqrtkm=1.3, seed=2)
    out = propagate(_polarized_ensemble(10.0), fiber)
    assert stokes_dop(out.stokes) == pytest.approx(np.ones(64))


def test_narrowband_light_keeps_its_dop():
    fiber = build_fiber(1.0, pmd_coeff_ps_sqrtkm=0.05, seed=2)
    out = propagate(_polarized_ensemble(0.2), fiber)
    assert degree_of_polarization(ensemble_mean(out)) > 0.999


def test_broadband_light_depolarizes_with_length():
    dops = []
    for length in (0.0, 1.0, 16.0):
        fiber = build_fiber(length, pmd_coeff_ps_sqrtkm=1.3, seed=4)
        dops.append(degree_of_polarization(ensemble_mean(
            propagate(_polarized_ensemble(16.0, n=128), fiber))))
    assert dops[0] == pytest.approx(1.0)
    assert dops[2] < dops[0]
    assert dops[2] < 0.8


def test_concatenation_adds_length_loss_and_segments():
    a = build_fiber(1.0, seed=1, atten_db_per_km=0.2)
    b = build_fiber(2.0, seed=2, atten_db_per_km=0.5)
    chain = concatenate([a, b])
    assert chain.length_km == 3.0
    assert chain.loss_db == pytest.approx(1.2)
    assert chain.n_segments == a.n_segments + b.n_segments
    state = StokesVector(1.0, 0.2, 0.5, -0.7).as_array()
    sequential = propagate_stokes(propagate_stokes(state, [1560.0], a), [1560.0], b)
    assert propagate_stokes(state, [1560.0], chain) == pytest.approx(sequential)
    with pytest.raises(ValueError):
        concatenate([])


def test_drift_time_zero_is_the_undrifted_fiber():
    fiber = build_fiber(5.0, pmd_coeff_ps_sqrtkm=0.5, drift_rate=0.3, seed=4)
    ensemble = _polarized_ensemble(2.0)
    assert np.allclose(propagate(ensemble, fiber, at_time=0.0).stokes,
                       propagate(ensemble, fiber).stokes)


def test_still_fiber_ignores_the_drift_time():
    fiber = build_fiber(5.0, pmd_coeff_ps_sqrtkm=0.5, drift_rate=0.0, seed=4)
    ensemble = _polarized_ensemble(2.0)
    assert np.allclose(propagate(ensemble, fiber, at_time=6.0).stokes,
                       propagate(ensemble, fiber).stokes)


def test_drift_time_moves_the_output_reproducibly():
    fiber = build_fiber(5.0, pmd_coeff_ps_sqrtkm=0.5, drift_rate=0.3, seed=4)
    ensemble = _polarized_ensemble(2.0)
    drifted = propagate(ensemble, fiber, at_time=2.0)
    assert not np.allclose(drifted.stokes, propagate(ensemble, fiber).stokes)
    assert np.array_equal(drifted.stokes, propagate(ensemble, fiber, at_time=2.0).stokes)
    assert stokes_dop(drifted.stokes) == pytest.approx(np.ones(len(drifted.stokes)))
    assert drifted.mu == pytest.approx(ensemble.mu * fiber.transmittance)


def test_negative_drift_time_is_rejected():
    fiber = build_fiber(1.0, seed=1)
    with pytest.raises(ValueError):
        propagate(_polarized_ensemble(1.0), fiber, at_time=-1.0)
