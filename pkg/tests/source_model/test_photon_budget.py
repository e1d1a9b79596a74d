import numpy as np
import pytest

from bb84sim import ResultIOError, ScenarioConfigError, headroom_db, launch_power_dbm
from bb84sim.source import (GEONSI_MAX_OUTPUT_DBM, SpectrumShape, read_spectrum_csv,
                            sample_photon_count)


def test_launch_power_at_100_mhz():
    assert launch_power_dbm(0.1, 1e8, 1581.0) == pytest.approx(-89.0, abs=0.1)


def test_headroom_at_two_symbol_rates():
    assert headroom_db(GEONSI_MAX_OUTPUT_DBM, 0.1, 1e8, 1581.0) == pytest.approx(19.1, abs=0.2)
    assert headroom_db(GEONSI_MAX_OUTPUT_DBM, 0.1, 1e9, 1581.0) == pytest.approx(9.1, abs=0.2)


def test_headroom_is_zero_at_equal_power():
    launch = launch_power_dbm(0.5, 2e9, 1550.0)
    assert headroom_db(launch, 0.5, 2e9, 1550.0) == pytest.approx(0.0, abs=1e-12)


def test_poisson_sampling_matches_mean():
    rng = np.random.default_rng(7)
    counts = sample_photon_count(0.1, rng, size=200_000)
    assert counts.mean() == pytest.approx(0.1, abs=0.003)
    assert isinstance(sample_photon_count(0.1, rng), int)


def test_tabulated_spectrum_from_csv(tmp_path):
    path = tmp_path / "spectrum.csv"
    path.write_text("wavelength_nm,relative_density\n1580,0\n1585,1\n1590,0\n")
    spec = read_spectrum_csv(path)
    assert spec.shape is SpectrumShape.TABULATED
    assert spec.center_nm == pytest.approx(1585.0)
    assert spec.support_nm() == (1580.0, 1590.0)


def test_spectrum_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("lambda,density\n1580,1\n1590,1\n")
    with pytest.raises(ScenarioConfigError):
        read_spectrum_csv(bad)
    with pytest.raises(ResultIOError):
        read_spectrum_csv(tmp_path / "missing.csv")
