"""Command-line interface.

Subcommands: ``run``, ``sweep-ob``, ``sweep-bandwidth``, ``sweep-length``,
``drift-trace``, ``budget``, ``calibrate`` and ``evaluate``.

Exit codes: 0 success, 2 configuration error, 3 synchronization failure
or empty sifted key, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Final

import numpy as np

from ._version_info import __version__
from .calibration import calibrate, write_calibrated
from .csv_io import (read_frame_csv, read_provenance, read_tags_csv,
                     report_to_frame, write_csv, write_frame_csv, write_tags_csv)
from .exceptions import (EmptyEnsembleError, ResultIOError, ScenarioConfigError,
                         SyncFailureError)
from .flags import double_click_policy
from .protocol import evaluate_tags
from .result_store import ResultStore
from .scenario import Scenario, load_scenario, scenario_hash
from .simulation import predict_report, simulate
from .source import GEONSI_MAX_OUTPUT_DBM
from .sweeps import (ANALYTIC, METHODS, MONTE_CARLO, SweepResult, budget,
                     drift_trace, sweep_bandwidth, sweep_length, sweep_ob)

logger = logging.getLogger(__name__)

EXIT_OK: Final[int] = 0
EXIT_CONFIG: Final[int] = 2
EXIT_SYNC: Final[int] = 3
EXIT_IO: Final[int] = 4

DEFAULT_SCENARIO: Final[str] = "ase_ob_sweep"
DEFAULT_OB_POINTS: Final[str] = "0:21:3"
DEFAULT_BANDWIDTH_POINTS: Final[str] = "1,1.5,2,5,10,16"
DEFAULT_LENGTH_POINTS: Final[str] = "0,0.25,0.5,1"


def parse_points(text: str) -> list[float]:
    """Parse ``"a,b,c"`` or ``"start:stop:step"`` (stop exclusive).

    Raises:
        ScenarioConfigError: For malformed input.
    """
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0.0:
                raise ValueError("step must be positive")
            return [float(v) for v in np.arange(start, stop - 1e-9 * step, step)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ScenarioConfigError([f"--points: cannot parse {text!r} ({exc})"]) from exc


def _apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    run_changes = {}
    if args.seed is not None:
        run_changes["master_seed"] = args.seed
    if args.symbols is not None:
        run_changes["symbols"] = args.symbols
    if args.threads is not None:
        run_changes["threads"] = args.threads
    if getattr(args, "seeds", None) is not None:
        run_changes["seeds"] = args.seeds
    return scenario.with_section("run", **run_changes) if run_changes else scenario


def _load(args: argparse.Namespace) -> Scenario:
    return _apply_overrides(load_scenario(args.scenario), args)


def _write_sweep(result: SweepResult, scenario: Scenario, out: Path, name: str) -> None:
    path = write_csv(result.to_frame(), out / f"{name}.csv",
                     scenario_hash=result.metadata["scenario_hash"],
                     master_seed=scenario.run.master_seed,
                     extra=dict(method=result.metadata["method"]))
    print(result.to_frame().to_string(index=False))
    print(f"wrote {path}")


def _store(args: argparse.Namespace) -> ResultStore | None:
    return None if args.cache is None else ResultStore(base_dir=args.cache)


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _load(args)
    out = Path(args.out)
    digest = scenario_hash(scenario)
    if args.method == ANALYTIC:
        prediction = predict_report(scenario)
        print(f"predicted QBER  {100 * prediction.qber:.2f} %")
        print(f"predicted raw key {prediction.raw_key_bps:.1f} b/s")
        print(f"mean DOP        {prediction.dop_mean:.4f}")
        return EXIT_OK
    result = simulate(scenario)
    print(result.report.summary())
    write_csv(report_to_frame(result.report).assign(dop_mean=result.dop_mean),
              out / "run_report.csv", scenario_hash=digest,
              master_seed=scenario.run.master_seed)
    if args.export:
        write_frame_csv(result.frame, scenario.basis_set, out / "frame.csv",
                        scenario_hash=digest)
        write_tags_csv(result.tags, out / "tags.csv", scenario_hash=digest,
                       master_seed=scenario.run.master_seed,
                       extra=dict(basis_switch_symbol=result.basis_switch_symbol,
                                  duration_s=scenario.duration_s,
                                  window_fraction=scenario.receiver.window_fraction,
                                  offset_s=scenario.receiver.offset_s))
    return EXIT_OK


def _cmd_sweep_ob(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result = sweep_ob(scenario, parse_points(args.points or DEFAULT_OB_POINTS),
                      method=args.method, store=_store(args))
    _write_sweep(result, scenario, Path(args.out), "sweep_ob")
    return EXIT_OK


def _cmd_sweep_bandwidth(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result = sweep_bandwidth(scenario, parse_points(args.points or DEFAULT_BANDWIDTH_POINTS),
                             method=args.method, store=_store(args))
    _write_sweep(result, scenario, Path(args.out), "sweep_bandwidth")
    return EXIT_OK


def _cmd_sweep_length(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result = sweep_length(scenario, parse_points(args.points or DEFAULT_LENGTH_POINTS),
                          method=args.method, store=_store(args))
    _write_sweep(result, scenario, Path(args.out), "sweep_length")
    return EXIT_OK


def _cmd_drift_trace(args: argparse.Namespace) -> int:
    scenario = _load(args)
    table = drift_trace(scenario, args.hours, args.step_hours, args.probe or [1570.0, 1585.0])
    path = write_csv(table, Path(args.out) / "drift_trace.csv",
                     scenario_hash=scenario_hash(scenario),
                     master_seed=scenario.run.master_seed)
    print(f"wrote {len(table)} samples to {path}")
    return EXIT_OK


def _cmd_budget(args: argparse.Namespace) -> int:
    table = budget(args.mu, args.rate, args.lambda_nm, args.source_dbm)
    print(table.to_string(index=False))
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result = calibrate(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_calibrated(result, out / f"{result.scenario.name}.toml")
    (out / f"{result.scenario.name}_diff.json").write_text(
        json.dumps(result.diff, indent=2, default=str), encoding="utf-8")
    for label, value in result.fitted.items():
        print(f"{label:32s} {value:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    frame = read_frame_csv(args.frame)
    tags = read_tags_csv(args.tags)
    info = read_provenance(args.tags)
    switch = info.get("basis_switch_symbol")
    duration = float(info.get("duration_s", 0.0)) or (
        float(tags.t_s[-1]) if len(tags) else 0.0)
    window = args.window if args.window is not None else float(info.get("window_fraction", 0.5))
    offset = float(info.get("offset_s", 0.0))
    report = evaluate_tags(frame, tags, window_fraction=window, duration_s=duration,
                           offset_s=offset,
                           basis_switch_symbol=None if switch is None else int(switch),
                           policy=double_click_policy(args.double_click))
    print(report.summary())
    write_csv(report_to_frame(report), Path(args.out) / "evaluate_report.csv",
              scenario_hash=info.get("scenario_hash", "unknown"),
              master_seed=int(info.get("master_seed", 0)))
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, *, points: bool = False,
                method: bool = False) -> None:
    parser.add_argument("--scenario", default=DEFAULT_SCENARIO,
                        help="scenario TOML file or preset name")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--symbols", type=int, help="symbols per point")
    parser.add_argument("--threads", type=int, help="worker threads")
    if points:
        parser.add_argument("--points", help="'a,b,c' or 'start:stop:step'")
        parser.add_argument("--cache", help="result store directory for sweep points")
    if method:
        parser.add_argument("--method", choices=METHODS, default=MONTE_CARLO)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bb84sim",
        description="Photon-level simulator of polarization BB84 with a broadband source.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    _add_common(run, method=True)
    run.add_argument("--export", action="store_true", help="also write frame and tag CSVs")
    run.set_defaults(handler=_cmd_run)

    for name, handler in (("sweep-ob", _cmd_sweep_ob),
                          ("sweep-bandwidth", _cmd_sweep_bandwidth),
                          ("sweep-length", _cmd_sweep_length)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} sweep")
        _add_common(p, points=True, method=True)
        if name == "sweep-length":
            p.add_argument("--seeds", type=int, help="fiber realizations to average")
        p.set_defaults(handler=handler)

    drift = sub.add_parser("drift-trace", help="Poincaré trajectory of probe wavelengths")
    _add_common(drift)
    drift.add_argument("--hours", type=float, default=5.0)
    drift.add_argument("--step-hours", type=float, default=0.1)
    drift.add_argument("--probe", type=float, action="append",
                       help="probe wavelength in nm (repeatable)")
    drift.set_defaults(handler=_cmd_drift_trace)

    bud = sub.add_parser("budget", help="launch power and headroom")
    bud.add_argument("--mu", type=float, default=0.1)
    bud.add_argument("--rate", type=float, default=1e8)
    bud.add_argument("--lambda-nm", type=float, default=1581.0)
    bud.add_argument("--source-dbm", type=float, default=GEONSI_MAX_OUTPUT_DBM)
    bud.set_defaults(handler=_cmd_budget)

    cal = sub.add_parser("calibrate", help="fit unreported parameters and pin them")
    _add_common(cal)
    cal.set_defaults(handler=_cmd_calibrate)

    ev = sub.add_parser("evaluate", help="post-process exported frame and tag CSVs")
    ev.add_argument("--frame", required=True, help="frame CSV")
    ev.add_argument("--tags", required=True, help="tag CSV")
    ev.add_argument("--window", type=float, help="temporal window fraction")
    ev.add_argument("--double-click", default="discard", choices=["discard", "random"])
    ev.add_argument("--out", default="results")
    ev.set_defaults(handler=_cmd_evaluate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except ScenarioConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    except SyncFailureError as exc:
        print(f"sync failure: {exc}", file=sys.stderr)
        return EXIT_SYNC
    except EmptyEnsembleError as exc:
        print(f"no key: {exc}", file=sys.stderr)
        return EXIT_SYNC
    except (ResultIOError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
