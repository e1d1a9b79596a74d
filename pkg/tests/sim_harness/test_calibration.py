import math

import numpy as np
import pytest
from scipy import stats

from bb84sim import (calibrate, load_scenario, predict_report, sweep_bandwidth,
                     sweep_ob, write_calibrated)
from bb84sim.sweeps import ANALYTIC, MONTE_CARLO

pytestmark = pytest.mark.slow

BANDWIDTHS_NM = [1.0, 1.5, 2.0, 5.0, 10.0, 16.0]


@pytest.fixture(scope="module")
def ob_calibration():
    return calibrate(load_scenario("ase_ob_sweep"))


@pytest.fixture(scope="module")
def iq_calibration():
    return calibrate(load_scenario("iq_bandwidth"))


def qber_at(scenario, *, width_nm=None, rate_hz=None, length_km=0.0):
    if width_nm is not None:
        scenario = scenario.replace(source=scenario.source.with_width(width_nm))
    if rate_hz is not None:
        scenario = scenario.with_section("protocol", rate_hz=rate_hz)
    return predict_report(scenario.with_section("fiber", length_km=length_km)).qber


def assert_monte_carlo_agrees(mc_row, analytic_row):
    assert mc_row["sync_ok"]
    n = mc_row["sifted_count"]
    assert n > 500
    low, high = stats.binomtest(mc_row["error_count"], n).proportion_ci(
        confidence_level=0.999, method="wilson")
    assert low <= analytic_row["qber"] <= high
    assert mc_row["raw_key_bps"] == pytest.approx(
        analytic_row["raw_key_bps"], rel=4.0 / math.sqrt(n))


def test_ob_calibration_hits_its_anchors(ob_calibration):
    assert set(ob_calibration.fitted) == {
        "receiver.insertion_loss_db", "encoder.extinction_db", "receiver.dark_acceptance"}
    residuals = ob_calibration.residuals
    assert abs(residuals["receiver.insertion_loss_db"]) < 1.0
    assert abs(residuals["encoder.extinction_db"]) < 1e-4
    assert abs(residuals["receiver.dark_acceptance"]) < 1e-4
    assert ob_calibration.scenario.name == "ase_ob_sweep_calibrated"
    assert ob_calibration.diff


def test_ob_sweep_threshold_and_slope(ob_calibration):
    grid = np.arange(0.0, 22.0, 1.0)
    result = sweep_ob(ob_calibration.scenario, grid, method=ANALYTIC)
    qber = result.column("qber")
    assert np.all(np.diff(qber) > 0)
    crossing = float(np.interp(0.11, qber, grid))
    assert crossing == pytest.approx(15.2, abs=2.0)
    raw = result.column("raw_key_bps")
    slope_db = 10.0 * math.log10(raw[3] / raw[12]) / 3.0
    assert slope_db == pytest.approx(3.0, abs=0.2)


def test_iq_calibration_predicts_the_wide_band(iq_calibration):
    scenario = iq_calibration.scenario
    assert "encoder.tx_dgd_ps" in iq_calibration.fitted
    assert scenario.fiber.seed is not None
    assert qber_at(scenario, width_nm=16.0) == pytest.approx(0.4021, abs=0.05)
    result = sweep_bandwidth(scenario, BANDWIDTHS_NM, method=ANALYTIC)
    assert np.all(np.diff(result.column("qber")) > 0)


def test_iq_calibration_length_rate_map(iq_calibration):
    scenario = iq_calibration.scenario
    for rate in (1e8, 1e9):
        for length in (0.0, 0.25, 0.5, 1.0):
            assert qber_at(scenario, width_nm=1.0, rate_hz=rate, length_km=length) < 0.11
    assert qber_at(scenario, width_nm=2.0, rate_hz=1e9, length_km=0.25) < 0.11
    assert qber_at(scenario, width_nm=2.0, rate_hz=1e9, length_km=1.0) >= 0.11


def test_calibrated_scenario_is_written_and_reloads(iq_calibration, tmp_path):
    path = write_calibrated(iq_calibration, tmp_path / "iq.toml")
    assert path.read_text(encoding="utf-8").startswith("#")
    assert load_scenario(path) == iq_calibration.scenario.replace(name="iq")


def test_geonsi_demo_prediction():
    assert 0.0703 <= predict_report(load_scenario("geonsi_demo")).qber <= 0.0921


def test_ob_monte_carlo_matches_the_analytic_sweep(ob_calibration):
    scenario = ob_calibration.scenario.with_section(
        "run", symbols=4_000_000_000, master_seed=21, threads=1)
    grid = [0.0, 15.2]
    mc = sweep_ob(scenario, grid, method=MONTE_CARLO, threads=1)
    analytic = sweep_ob(scenario, grid, method=ANALYTIC, threads=1)
    for mc_row, analytic_row in zip(mc.rows, analytic.rows):
        assert_monte_carlo_agrees(mc_row, analytic_row)
    assert mc.rows[1]["qber"] > mc.rows[0]["qber"]


def test_iq_monte_carlo_matches_the_analytic_sweep_at_5_nm(iq_calibration):
    scenario = iq_calibration.scenario.with_section(
        "run", symbols=200_000_000, master_seed=22, threads=1)
    mc = sweep_bandwidth(scenario, [5.0], method=MONTE_CARLO, threads=1)
    analytic = sweep_bandwidth(scenario, [5.0], method=ANALYTIC, threads=1)
    assert_monte_carlo_agrees(mc.rows[0], analytic.rows[0])
