import numpy as np
from scipy import stats

from bb84sim import Bb84State, StokesVector, build_fiber
from bb84sim.fiber import propagate_stokes
from bb84sim.polarization import angular_separation

LENGTHS_KM = [0.5, 1.5, 4.8, 9.1, 13.3]
PROBES_NM = [1570.0, 1585.0]


def mean_wavelength_separation(length_km, seeds):
    launched = np.tile(Bb84State.D.stokes.as_array(), (2, 1))
    angles = []
    for seed in seeds:
        out = propagate_stokes(launched, PROBES_NM, build_fiber(length_km, seed=seed))
        angles.append(angular_separation(StokesVector.from_array(out[0]),
                                         StokesVector.from_array(out[1])))
    return float(np.mean(angles))


def test_wavelength_separation_grows_with_length():
    seeds = range(20)
    separations = [mean_wavelength_separation(length, seeds) for length in LENGTHS_KM]
    rho, _ = stats.spearmanr(LENGTHS_KM, separations)
    assert rho > 0.8
    assert separations[-1] > separations[0]


def test_wavelengths_coincide_without_dgd():
    launched = np.tile(Bb84State.H.stokes.as_array(), (2, 1))
    fiber = build_fiber(10.0, pmd_coeff_ps_sqrtkm=0.0, seed=3)
    out = propagate_stokes(launched, PROBES_NM, fiber)
    assert np.allclose(out[0], out[1])
