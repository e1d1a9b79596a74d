"""Parameter sweeps over optical budget, bandwidth and fiber length.

Every sweep point reuses the master seed, so neighbouring points differ
only by the swept parameter. Points are independent and are evaluated
concurrently with joblib; rows come back in input order.

Each point is either simulated (``method="monte-carlo"``) or evaluated with
the closed-form predictor (``method="analytic"``).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, Final

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ._version_info import __version__
from .encoder import Architecture
from .exceptions import EmptyEnsembleError, ScenarioConfigError
from .fiber import trajectory
from .flags import USE_TRANSMITTED_ALIGNMENT
from .result_store import ResultStore
from .scenario import Scenario, scenario_hash, substream, substream_seed
from .simulation import build_channel, predict_report, simulate
from .source import headroom_db, launch_power_dbm

logger = logging.getLogger(__name__)

MONTE_CARLO: Final[str] = "monte-carlo"
ANALYTIC: Final[str] = "analytic"
METHODS: Final[tuple[str, ...]] = (MONTE_CARLO, ANALYTIC)

SWEEP_COLUMNS: Final[tuple[str, ...]] = (
    "sweep_var", "qber", "qber_3sigma", "raw_key_bps", "sifted_count",
    "dop_mean", "error_count", "sync_ok")
TRAJECTORY_COLUMNS: Final[tuple[str, ...]] = (
    "time_hours", "lambda_nm", "s1", "s2", "s3")


@dataclass(frozen=True)
class SweepResult:
    """One row per sweep point plus provenance.

    Attributes:
        variable: Name of the swept quantity, e.g. ``optical_budget_db``.
        rows: Per-point results in input order, keyed by ``SWEEP_COLUMNS``.
        metadata: Seed, scenario hash, tool version and method.
    """

    variable: str
    rows: list[dict[str, Any]]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def values(self) -> list[float]:
        return [row["sweep_var"] for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        """Rows as a DataFrame with the sweep columns first."""
        frame = pd.DataFrame(self.rows)
        extra = [c for c in frame.columns if c not in SWEEP_COLUMNS]
        return frame[[*SWEEP_COLUMNS, *extra]]

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def _empty_row(value: float, dop_mean: float) -> dict[str, Any]:
    return dict(sweep_var=value, qber=math.nan, qber_3sigma=math.nan,
                raw_key_bps=0.0, sifted_count=0, dop_mean=dop_mean,
                error_count=0, sync_ok=False)


def evaluate_point(scenario: Scenario, value: float, *, method: str = MONTE_CARLO,
                   store: ResultStore | None = None) -> dict[str, Any]:
    """Evaluate one sweep point and return its row.

    Monte Carlo points whose synchronization fails fall back to the
    transmitted alignment and are flagged with ``sync_ok = False``; points
    without any sifted bit get a NaN QBER.
    """
    if method not in METHODS:
        raise ScenarioConfigError([f"sweep.method: unknown {method!r}"])
    key = (scenario_hash(scenario), method)
    if store is not None and key in store:
        logger.debug("cached point %s = %s", key, value)
        return {**store[key], "sweep_var": value}

    setup = build_channel(scenario)
    if method == ANALYTIC:
        prediction = predict_report(scenario, setup=setup)
        row = dict(sweep_var=value, qber=prediction.qber,
                   qber_3sigma=prediction.qber_3sigma(scenario.duration_s),
                   raw_key_bps=prediction.raw_key_bps,
                   sifted_count=int(round(prediction.raw_key_bps * scenario.duration_s)),
                   dop_mean=prediction.dop_mean,
                   error_count=int(round(prediction.error_bps * scenario.duration_s)),
                   sync_ok=True)
    else:
        try:
            result = simulate(scenario, threads=1, setup=setup,
                              sync_fallback=USE_TRANSMITTED_ALIGNMENT)
        except EmptyEnsembleError:
            logger.warning("%s = %s: empty sifted key", scenario.name, value)
            row = _empty_row(value, setup.dop_mean)
        else:
            report = result.report
            row = dict(sweep_var=value, qber=report.qber,
                       qber_3sigma=report.qber_3sigma,
                       raw_key_bps=report.raw_key_bps,
                       sifted_count=report.sifted_count, dop_mean=result.dop_mean,
                       error_count=report.error_count, sync_ok=report.sync_ok)
    if store is not None:
        store[key] = row
    logger.info("%s = %s: QBER %.4f, raw key %.1f b/s", scenario.name, value,
                row["qber"], row["raw_key_bps"])
    return row


def _run_sweep(scenario: Scenario, variable: str, values: Sequence[float],
               make_point: Callable[[float], Scenario], *, method: str,
               threads: int | None, store: ResultStore | None) -> SweepResult:
    points = [make_point(float(v)) for v in values]
    n_jobs = threads if threads is not None else scenario.run.threads
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(evaluate_point)(point, float(v), method=method, store=store)
        for point, v in zip(points, values))
    metadata = dict(master_seed=scenario.run.master_seed,
                    scenario_hash=scenario_hash(scenario),
                    version=__version__, method=method, variable=variable)
    return SweepResult(variable=variable, rows=list(rows), metadata=metadata)


def sweep_ob(scenario: Scenario, ob_values_db: Sequence[float], *,
             method: str = MONTE_CARLO, threads: int | None = None,
             store: ResultStore | None = None) -> SweepResult:
    """QBER and raw key versus neutral attenuation between Alice and Bob."""
    return _run_sweep(
        scenario, "optical_budget_db", ob_values_db,
        lambda ob: scenario.with_section("run", optical_budget_db=ob),
        method=method, threads=threads, store=store)


def sweep_bandwidth(scenario: Scenario, deltalambda_values_nm: Sequence[float], *,
                    method: str = MONTE_CARLO, threads: int | None = None,
                    store: ResultStore | None = None) -> SweepResult:
    """QBER versus optical bandwidth of the source filter.

    Raises:
        ScenarioConfigError: Unless the encoder is the dual-polarization
            I/Q modulator.
    """
    if scenario.architecture is not Architecture.DUALPOL_IQ:
        raise ScenarioConfigError(
            ["encoder.architecture: bandwidth sweeps need the dualpol-iq encoder"])
    return _run_sweep(
        scenario, "deltalambda_nm", deltalambda_values_nm,
        lambda width: scenario.replace(source=scenario.source.with_width(width)),
        method=method, threads=threads, store=store)


def sweep_length(scenario: Scenario, lengths_km: Sequence[float], *,
                 method: str = MONTE_CARLO, threads: int | None = None,
                 store: ResultStore | None = None) -> SweepResult:
    """QBER versus spool length, averaged over ``run.seeds`` fiber draws.

    Each fiber draw keeps its seed across lengths, so one realization is
    stretched rather than redrawn. With several draws, ``qber`` is their
    mean and ``qber_3sigma`` adds three standard deviations of the draws in
    quadrature; ``qber_seed_spread`` reports that spread alone.
    """
    n_seeds = scenario.run.seeds
    if scenario.fiber.seed is not None and n_seeds == 1:
        fiber_seeds = [scenario.fiber.seed]
    else:
        fiber_seeds = [substream_seed(scenario.run.master_seed, "fiber", s)
                       for s in range(n_seeds)]
    per_seed = [
        _run_sweep(scenario, "length_km", lengths_km,
                   lambda length, fs=fs: scenario.with_section(
                       "fiber", length_km=length, seed=fs),
                   method=method, threads=threads, store=store)
        for fs in fiber_seeds]
    rows = []
    for i, value in enumerate(lengths_km):
        point = [sweep.rows[i] for sweep in per_seed]
        qbers = np.array([p["qber"] for p in point], dtype=float)
        spread = 3.0 * float(np.std(qbers, ddof=1)) if len(qbers) > 1 else 0.0
        binomial = float(np.mean([p["qber_3sigma"] for p in point]))
        rows.append(dict(
            sweep_var=float(value), qber=float(np.mean(qbers)),
            qber_3sigma=math.hypot(binomial, spread),
            raw_key_bps=float(np.mean([p["raw_key_bps"] for p in point])),
            sifted_count=int(sum(p["sifted_count"] for p in point)),
            dop_mean=float(np.mean([p["dop_mean"] for p in point])),
            error_count=int(sum(p["error_count"] for p in point)),
            sync_ok=all(p["sync_ok"] for p in point),
            qber_seed_spread=spread))
    metadata = {**per_seed[0].metadata, "fiber_seeds": fiber_seeds}
    return SweepResult(variable="length_km", rows=rows, metadata=metadata)


def drift_trace(scenario: Scenario, duration_hours: float, step_hours: float,
                probe_lambdas: Sequence[float]) -> pd.DataFrame:
    """Output polarization of narrow probes over time.

    The launched state is the bit-0 state of basis 0; the drift stream is
    the ``drift`` substream of the master seed.
    """
    fiber = scenario.fiber.build(scenario.run.master_seed)
    launched = scenario.basis_set.states[0].stokes
    rows = trajectory(fiber, probe_lambdas, duration_hours, step_hours, launched,
                      rng=substream(scenario.run.master_seed, "drift"))
    return pd.DataFrame(rows, columns=list(TRAJECTORY_COLUMNS))


def budget(mu: float, rate: float, lambda_nm: float,
           source_dbm: float) -> pd.DataFrame:
    """Launch power, source power and headroom as a two-column table."""
    launch = launch_power_dbm(mu, rate, lambda_nm)
    return pd.DataFrame(
        [("mu", mu), ("rate_hz", rate), ("lambda_nm", lambda_nm),
         ("launch_power_dbm", launch), ("source_power_dbm", source_dbm),
         ("headroom_db", headroom_db(source_dbm, mu, rate, lambda_nm))],
        columns=["quantity", "value"])
