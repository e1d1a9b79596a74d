import numpy as np
import pytest

from bb84sim import BasisSet, SymbolFrame, TagStream, dump_scenario
from bb84sim.cli import (EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SYNC, main,
                         parse_points)
from bb84sim.csv_io import (read_csv, read_provenance, write_frame_csv,
                            write_tags_csv)

from tests.sim_harness.small_scenarios import bright_scenario


@pytest.fixture
def scenario_file(tmp_path):
    return dump_scenario(bright_scenario(symbols=1_000_000), tmp_path / "bright.toml")


def test_parse_points():
    assert parse_points("1,1.5,2") == [1.0, 1.5, 2.0]
    assert parse_points("0:9:3") == [0.0, 3.0, 6.0]


def test_budget_prints_the_headroom(capsys):
    assert main(["budget", "--mu", "0.1", "--rate", "1e8"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "launch_power_dbm" in out
    assert "headroom_db" in out


def test_run_with_analytic_method(scenario_file, tmp_path, capsys):
    code = main(["run", "--scenario", str(scenario_file), "--method", "analytic",
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    assert "predicted QBER" in capsys.readouterr().out


def test_run_export_then_evaluate(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out),
                 "--export"]) == EXIT_OK
    run_report = read_csv(out / "run_report.csv")
    assert read_provenance(out / "tags.csv")["basis_switch_symbol"]
    assert main(["evaluate", "--frame", str(out / "frame.csv"),
                 "--tags", str(out / "tags.csv"), "--out", str(out)]) == EXIT_OK
    evaluated = read_csv(out / "evaluate_report.csv")
    assert evaluated["qber"].iloc[0] == pytest.approx(run_report["qber"].iloc[0], abs=1e-3)
    assert evaluated["sifted_count"].iloc[0] == pytest.approx(
        run_report["sifted_count"].iloc[0], rel=1e-3)


def test_outputs_do_not_depend_on_threads(scenario_file, tmp_path):
    for threads in ("1", "3"):
        assert main(["run", "--scenario", str(scenario_file), "--threads", threads,
                     "--out", str(tmp_path / threads), "--export"]) == EXIT_OK
    for name in ("run_report.csv", "tags.csv", "frame.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "3" / name).read_bytes()


def test_analytic_sweep_writes_csv(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert main(["sweep-ob", "--scenario", str(scenario_file), "--points", "0,10",
                 "--method", "analytic", "--out", str(out)]) == EXIT_OK
    table = read_csv(out / "sweep_ob.csv")
    assert table["sweep_var"].tolist() == [0.0, 10.0]
    assert read_provenance(out / "sweep_ob.csv")["method"] == "analytic"


def test_config_errors_exit_with_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[protocol]\nmu = -1\n", encoding="utf-8")
    assert main(["run", "--scenario", str(bad)]) == EXIT_CONFIG
    assert "protocol.mu" in capsys.readouterr().err
    broken = tmp_path / "broken.toml"
    broken.write_text("[protocol\n", encoding="utf-8")
    assert main(["run", "--scenario", str(broken)]) == EXIT_CONFIG
    assert main(["sweep-ob", "--points", "a,b", "--method", "analytic"]) == EXIT_CONFIG


def test_bandwidth_sweep_on_four_modulator_is_a_config_error(scenario_file):
    assert main(["sweep-bandwidth", "--scenario", str(scenario_file),
                 "--method", "analytic"]) == EXIT_CONFIG


def test_sync_failure_exits_with_3(tmp_path):
    path = dump_scenario(bright_scenario(mu=1e-6, dark_rate_cps=1e6),
                         tmp_path / "dark.toml")
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path)]) == EXIT_SYNC


def test_evaluate_without_a_sifted_bit_exits_with_3(tmp_path, capsys):
    # every symbol clicks twice on the same detector: the frame still
    # synchronizes, but sifting discards all of them as double clicks
    bits = np.array([0, 1, 1, 0, 1, 0, 0, 0], dtype=np.uint8)
    frame = SymbolFrame(np.zeros(8, dtype=np.uint8), bits, 1e8, 0.1, 3)
    write_frame_csv(frame, BasisSet.HV_DA, tmp_path / "frame.csv", scenario_hash="manual")
    centers = (np.arange(8) + 0.5) * 1e-8
    tags = TagStream(np.repeat(bits, 2), np.repeat(centers, 2) + np.tile([0.0, 1e-10], 8))
    write_tags_csv(tags, tmp_path / "tags.csv", scenario_hash="manual", master_seed=0,
                   extra=dict(duration_s=8e-8, window_fraction=0.5))
    code = main(["evaluate", "--frame", str(tmp_path / "frame.csv"),
                 "--tags", str(tmp_path / "tags.csv"), "--out", str(tmp_path)])
    assert code == EXIT_SYNC
    err = capsys.readouterr().err
    assert "sifted key is empty" in err
    assert "Traceback" not in err


def test_io_errors_exit_with_4(scenario_file, tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "missing.toml")]) == EXIT_IO
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")
    assert main(["run", "--scenario", str(scenario_file),
                 "--out", str(blocker / "out")]) == EXIT_IO
