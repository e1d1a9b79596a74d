import numpy as np
import pytest

from bb84sim import (ResultStore, ScenarioConfigError, budget, drift_trace,
                     load_scenario, sweep_bandwidth, sweep_length, sweep_ob)
from bb84sim.sweeps import ANALYTIC, SWEEP_COLUMNS, TRAJECTORY_COLUMNS, evaluate_point

from tests.sim_harness.small_scenarios import bright_scenario


def test_analytic_ob_sweep_degrades_monotonically():
    result = sweep_ob(load_scenario("ase_ob_sweep"), [0, 6, 12, 18], method=ANALYTIC)
    assert result.values == [0.0, 6.0, 12.0, 18.0]
    assert np.all(np.diff(result.column("qber")) > 0)
    assert np.all(np.diff(result.column("raw_key_bps")) < 0)
    assert list(result.to_frame().columns[:len(SWEEP_COLUMNS)]) == list(SWEEP_COLUMNS)
    assert result.metadata["method"] == ANALYTIC
    assert result.metadata["variable"] == "optical_budget_db"


def test_monte_carlo_ob_sweep_keeps_input_order():
    scenario = bright_scenario(symbols=500_000, threads=2)
    result = sweep_ob(scenario, [10.0, 0.0])
    assert result.values == [10.0, 0.0]
    raw = result.column("raw_key_bps")
    assert 0.05 * raw[1] < raw[0] < 0.2 * raw[1]
    assert all(row["sync_ok"] for row in result.rows)


def test_bandwidth_sweep_needs_the_iq_encoder():
    with pytest.raises(ScenarioConfigError):
        sweep_bandwidth(load_scenario("ase_ob_sweep"), [1.0, 2.0], method=ANALYTIC)


def test_bandwidth_sweep_reports_every_width():
    result = sweep_bandwidth(load_scenario("iq_bandwidth"), [1.0, 16.0], method=ANALYTIC)
    assert result.values == [1.0, 16.0]
    dop = result.column("dop_mean")
    assert dop[1] < dop[0]


def test_length_sweep_averages_fiber_realizations():
    scenario = load_scenario("iq_bandwidth").with_section("run", seeds=3)
    result = sweep_length(scenario, [0.0, 1.0], method=ANALYTIC)
    assert len(result.metadata["fiber_seeds"]) == 3
    assert len(set(result.metadata["fiber_seeds"])) == 3
    table = result.to_frame()
    assert "qber_seed_spread" in table.columns
    assert table["qber_seed_spread"].iloc[0] == pytest.approx(0.0, abs=1e-12)
    assert table["qber_3sigma"].iloc[1] >= table["qber_seed_spread"].iloc[1]


def test_unknown_method_is_a_config_error():
    with pytest.raises(ScenarioConfigError):
        evaluate_point(bright_scenario(), 0.0, method="guess")


def test_sweep_points_are_served_from_the_store(tmp_path, monkeypatch):
    store = ResultStore(base_dir=tmp_path / "cache")
    scenario = load_scenario("ase_ob_sweep")
    first = sweep_ob(scenario, [0.0, 9.0], method=ANALYTIC, store=store)
    assert len(store) == 2

    def fail(*args, **kwargs):
        raise AssertionError("cached point was recomputed")

    monkeypatch.setattr("bb84sim.sweeps.build_channel", fail)
    second = sweep_ob(scenario, [0.0, 9.0], method=ANALYTIC, store=store)
    assert second.rows == first.rows


def test_drift_trace_table():
    scenario = bright_scenario().with_section("fiber", length_km=5.0, drift_rate=0.3)
    table = drift_trace(scenario, 1.0, 0.5, [1570.0, 1585.0])
    assert list(table.columns) == list(TRAJECTORY_COLUMNS)
    assert len(table) == 6
    assert table["time_hours"].tolist() == [0.0, 0.0, 0.5, 0.5, 1.0, 1.0]
    norms = np.sqrt(table["s1"] ** 2 + table["s2"] ** 2 + table["s3"] ** 2)
    assert norms.to_numpy() == pytest.approx(np.ones(6), abs=1e-9)
    again = drift_trace(scenario, 1.0, 0.5, [1570.0, 1585.0])
    assert again.equals(table)


def test_budget_table():
    table = budget(0.1, 1e8, 1581.0, -69.8).set_index("quantity")["value"]
    assert table["launch_power_dbm"] == pytest.approx(-89.0, abs=0.1)
    assert table["headroom_db"] == pytest.approx(
        table["source_power_dbm"] - table["launch_power_dbm"])
    assert table["headroom_db"] == pytest.approx(19.2, abs=0.2)
