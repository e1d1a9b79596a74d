import math

import numpy as np
import pytest

from bb84sim import (EncoderConfig, SyncFailureError, predict_report, run_single,
                     simulate)
from bb84sim.fiber import FiberModel
from bb84sim.flags import USE_TRANSMITTED_ALIGNMENT
from bb84sim.simulation import build_channel, received_frame_stokes, scenario_frame

from tests.sim_harness.small_scenarios import bright_scenario


def test_monte_carlo_agrees_with_the_prediction():
    scenario = bright_scenario()
    result = simulate(scenario)
    prediction = predict_report(scenario)
    report = result.report
    assert report.sync_ok
    assert report.shift == result.start_position
    assert abs(report.qber - prediction.qber) < report.qber_3sigma + 1e-3
    assert report.raw_key_bps == pytest.approx(prediction.raw_key_bps, rel=0.02)
    assert prediction.qber == pytest.approx(1 / 101, abs=2e-3)


def test_result_does_not_depend_on_the_thread_count():
    one = simulate(bright_scenario(threads=1))
    many = simulate(bright_scenario(threads=3))
    assert np.array_equal(one.tags.t_s, many.tags.t_s)
    assert np.array_equal(one.tags.channel, many.tags.channel)
    assert one.report == many.report


def test_bases_split_the_acquisition_in_halves():
    scenario = bright_scenario()
    result = simulate(scenario)
    assert result.basis_switch_symbol == scenario.n_frames // 2 * 511
    first = result.records.bob_basis_index[result.records.symbol_index
                                           < result.basis_switch_symbol]
    assert np.all(first == 0)
    assert set(result.report.per_basis) == {0, 1}
    assert result.report.per_basis[0].sifted_count > 0
    assert result.report.per_basis[1].sifted_count > 0


def test_noiseless_link_has_zero_qber_and_the_analytic_rate():
    scenario = bright_scenario(dark_rate_cps=0.0, extinction_db=200.0)
    report = run_single(scenario)
    prediction = predict_report(scenario)
    assert report.qber == 0.0
    assert report.raw_key_bps == pytest.approx(prediction.raw_key_bps, rel=0.02)


def test_dead_time_lowers_the_raw_key_as_predicted():
    free = predict_report(bright_scenario())
    dead = bright_scenario(dead_time_s=1e-6)
    limited = predict_report(dead)
    assert limited.raw_key_bps < free.raw_key_bps
    report = run_single(dead)
    assert report.raw_key_bps == pytest.approx(limited.raw_key_bps, rel=0.05)


def test_sync_failure_is_raised_or_flagged():
    scenario = bright_scenario(mu=1e-6, dark_rate_cps=1e6)
    with pytest.raises(SyncFailureError):
        simulate(scenario)
    result = simulate(scenario, sync_fallback=USE_TRANSMITTED_ALIGNMENT)
    assert not result.report.sync_ok
    assert result.report.shift == result.start_position


def test_noise_floor_uses_the_transmitted_alignment():
    base = bright_scenario(dark_rate_cps=1e6)
    scenario = base.replace(protocol=base.protocol.replace(mu=0.0),
                            run=base.run.replace(noise_floor=True))
    report = run_single(scenario)
    assert report.sync_ok
    assert report.qber == pytest.approx(0.5, abs=0.03)


def test_received_stokes_scale_with_losses():
    scenario = bright_scenario().with_section("run", optical_budget_db=10.0)
    setup = build_channel(scenario)
    assert setup.mu_received == pytest.approx(0.05)
    received = received_frame_stokes(setup, scenario_frame(scenario))
    assert received[:, 0] == pytest.approx(np.full(511, 0.05))
    assert setup.dop_mean == pytest.approx(EncoderConfig(extinction_db=20.0).visibility)


def test_small_mu_errors_follow_the_ensemble_dop():
    center_nm, delta_nu = 1550.0, 100e9
    width_nm = delta_nu * (center_nm * 1e-9) ** 2 / 299_792_458.0 * 1e9
    tau_ps = 0.5 / delta_nu * 1e12
    fiber = FiberModel(length_km=0.0, atten_db_per_km=0.0, axes=[[1.0, 0.0, 0.0]],
                       retardance_ref=[0.0], dgd_ps=[tau_ps], segment_drift=[0.0],
                       ref_lambda_nm=center_nm)
    scenario = bright_scenario(symbols=1_000_000, dark_rate_cps=0.0, extinction_db=60.0,
                               mu=0.1)
    scenario = scenario.replace(source=scenario.source.replace(
        center_nm=center_nm, width_nm=width_nm, n_slices=200))
    setup = build_channel(scenario, fiber=fiber)
    dop_diagonal = setup.dop_per_state[2]
    assert dop_diagonal == pytest.approx(abs(np.sinc(0.5)), abs=1e-3)
    report = simulate(scenario, setup=setup).report
    basis1 = report.per_basis[1]
    assert abs(basis1.qber - (1 - dop_diagonal) / 2) < basis1.qber_3sigma + 2e-3
    assert report.per_basis[0].qber < 0.01
    assert math.isfinite(predict_report(scenario, setup=setup).qber)
