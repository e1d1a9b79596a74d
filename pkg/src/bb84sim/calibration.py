"""Calibrate-then-predict: fit unreported device parameters to anchor points.

Two experiments are supported, selected by the encoder architecture:

- four-modulator (optical budget sweep): the receiver insertion loss is
  fitted to the raw key at OB 0, the extinction ratio to the QBER at OB 0
  and the dark acceptance to the OB where the QBER reaches 11 %.
- dualpol-iq (bandwidth and length sweeps): insertion loss to the 100 MHz
  raw key, extinction ratio and dark acceptance to the 1-nm back-to-back
  QBERs at 100 MHz and 1 GHz, transmitter skew to the 5-nm QBER and the PMD
  coefficient to the 1-km, 1-GHz QBER.

Each parameter is found with ``scipy.optimize.brentq`` on the analytic
predictor while the others are held fixed; the sweep over parameters is
repeated until nothing moves (Gauss-Seidel). The change relative to the
input scenario is logged with DeepDiff.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final

from deepdiff import DeepDiff
from scipy import optimize

from .encoder import Architecture
from .exceptions import ScenarioConfigError
from .scenario import Scenario, dump_scenario, scenario_hash
from .simulation import predict_report

logger = logging.getLogger(__name__)

MAX_ROUNDS: Final[int] = 12
RELATIVE_TOLERANCE: Final[float] = 1e-4


@dataclass(frozen=True)
class ObAnchors:
    """Anchor points of the optical budget sweep."""

    qber_at_ob0: float = 0.042
    raw_key_bps_at_ob0: float = 7600.0
    threshold_ob_db: float = 15.2
    threshold_qber: float = 0.11


@dataclass(frozen=True)
class IqAnchors:
    """Anchor points of the I/Q-modulator bandwidth and length sweeps."""

    narrow_nm: float = 1.0
    wide_nm: float = 5.0
    low_rate_hz: float = 1e8
    high_rate_hz: float = 1e9
    qber_narrow_low_rate: float = 0.0924
    qber_narrow_high_rate: float = 0.0629
    raw_key_bps_low_rate: float = 2850.0
    qber_wide_low_rate: float = 0.2503
    fiber_length_km: float = 1.0
    qber_fiber_high_rate: float = 0.0766


@dataclass(frozen=True)
class CalibrationResult:
    """Pinned scenario and the fit record.

    Attributes:
        scenario: Input scenario with the fitted fields replaced.
        fitted: Fitted value of every parameter, keyed ``section.field``.
        residuals: Remaining predictor error of every anchor.
        rounds: Gauss-Seidel rounds used.
        diff: DeepDiff of the scenario dictionaries (input to output).
    """

    scenario: Scenario
    fitted: dict[str, float]
    residuals: dict[str, float]
    rounds: int
    diff: dict = field(default_factory=dict)


@dataclass(frozen=True)
class _Parameter:
    section: str
    name: str
    lower: float
    upper: float
    objective: Callable[[Scenario], float]

    @property
    def label(self) -> str:
        return f"{self.section}.{self.name}"


def _solve(scenario: Scenario, p: _Parameter) -> float:
    """Root of ``p.objective`` in ``p.name``; clamps to a bound without one."""
    def f(value: float) -> float:
        return p.objective(scenario.with_section(p.section, **{p.name: value}))

    f_lo, f_hi = f(p.lower), f(p.upper)
    if math.isnan(f_lo) or math.isnan(f_hi):
        raise ScenarioConfigError([f"calibration: {p.label} gives undefined predictions"])
    if f_lo * f_hi > 0.0:
        best = p.lower if abs(f_lo) < abs(f_hi) else p.upper
        logger.warning("calibration: no root for %s in [%g, %g]; clamped to %g",
                       p.label, p.lower, p.upper, best)
        return best
    return float(optimize.brentq(f, p.lower, p.upper, xtol=1e-9, rtol=1e-10))


def _gauss_seidel(scenario: Scenario, parameters: list[_Parameter]
                  ) -> tuple[Scenario, dict[str, float], int]:
    fitted: dict[str, float] = {}
    for rounds in range(1, MAX_ROUNDS + 1):
        moved = False
        for p in parameters:
            old = float(getattr(getattr(scenario, p.section), p.name))
            new = _solve(scenario, p)
            scenario = scenario.with_section(p.section, **{p.name: new})
            fitted[p.label] = new
            if abs(new - old) > RELATIVE_TOLERANCE * max(abs(old), 1e-6):
                moved = True
            logger.debug("round %d: %s = %.6g", rounds, p.label, new)
        if not moved:
            return scenario, fitted, rounds
    logger.warning("calibration did not settle within %d rounds", MAX_ROUNDS)
    return scenario, fitted, MAX_ROUNDS


def _ob_parameters(anchors: ObAnchors) -> list[_Parameter]:
    def at_ob(s: Scenario, ob: float) -> Scenario:
        return s.with_section("run", optical_budget_db=ob)

    return [
        _Parameter("receiver", "insertion_loss_db", 0.0, 60.0,
                   lambda s: predict_report(at_ob(s, 0.0)).raw_key_bps
                   - anchors.raw_key_bps_at_ob0),
        _Parameter("encoder", "extinction_db", 3.0, 60.0,
                   lambda s: predict_report(at_ob(s, 0.0)).qber - anchors.qber_at_ob0),
        _Parameter("receiver", "dark_acceptance", 1e-4, 10.0,
                   lambda s: predict_report(at_ob(s, anchors.threshold_ob_db)).qber
                   - anchors.threshold_qber),
    ]


def _iq_parameters(anchors: IqAnchors) -> list[_Parameter]:
    def point(s: Scenario, width_nm: float, rate_hz: float,
              length_km: float = 0.0) -> Scenario:
        s = s.replace(source=s.source.with_width(width_nm))
        s = s.with_section("protocol", rate_hz=rate_hz)
        return s.with_section("fiber", length_km=length_km)

    return [
        _Parameter("receiver", "insertion_loss_db", 0.0, 60.0,
                   lambda s: predict_report(point(s, anchors.narrow_nm, anchors.low_rate_hz))
                   .raw_key_bps - anchors.raw_key_bps_low_rate),
        _Parameter("encoder", "extinction_db", 3.0, 60.0,
                   lambda s: predict_report(point(s, anchors.narrow_nm, anchors.high_rate_hz))
                   .qber - anchors.qber_narrow_high_rate),
        _Parameter("receiver", "dark_acceptance", 1e-4, 10.0,
                   lambda s: predict_report(point(s, anchors.narrow_nm, anchors.low_rate_hz))
                   .qber - anchors.qber_narrow_low_rate),
        _Parameter("encoder", "tx_dgd_ps", 0.0, 20.0,
                   lambda s: predict_report(point(s, anchors.wide_nm, anchors.low_rate_hz))
                   .qber - anchors.qber_wide_low_rate),
        _Parameter("fiber", "pmd_coeff_ps_sqrtkm", 0.0, 20.0,
                   lambda s: predict_report(point(s, anchors.narrow_nm, anchors.high_rate_hz,
                                                  anchors.fiber_length_km))
                   .qber - anchors.qber_fiber_high_rate),
    ]


def calibrate(scenario: Scenario, *, ob_anchors: ObAnchors | None = None,
              iq_anchors: IqAnchors | None = None) -> CalibrationResult:
    """Fit the unreported parameters of a scenario to its experiment's anchors.

    The I/Q calibration needs a fixed fiber realization; an unset
    ``fiber.seed`` is pinned first.

    Raises:
        ScenarioConfigError: If a prediction is undefined while fitting.
    """
    original = scenario
    if scenario.architecture is Architecture.DUALPOL_IQ:
        if scenario.fiber.seed is None:
            scenario = scenario.with_section(
                "fiber", seed=scenario.fiber.build(scenario.run.master_seed).seed)
        parameters = _iq_parameters(iq_anchors or IqAnchors())
    else:
        parameters = _ob_parameters(ob_anchors or ObAnchors())

    scenario, fitted, rounds = _gauss_seidel(scenario, parameters)
    residuals = {p.label: float(p.objective(scenario)) for p in parameters}
    for label, value in fitted.items():
        logger.info("calibrated %s = %.6g (residual %.3g)", label, value, residuals[label])
    diff = DeepDiff(original.as_dict(), scenario.as_dict(), significant_digits=9)
    logger.debug("calibration diff: %s", diff.pretty())
    return CalibrationResult(scenario=scenario.replace(name=f"{original.name}_calibrated"),
                             fitted=fitted, residuals=residuals, rounds=rounds,
                             diff=diff.to_dict())


def write_calibrated(result: CalibrationResult, path: str | Path) -> Path:
    """Write the pinned scenario with the fit record as header comments."""
    header = [f"calibrated scenario, hash {scenario_hash(result.scenario)}",
              f"Gauss-Seidel rounds: {result.rounds}"]
    header.extend(f"{label} = {value:.9g}" for label, value in result.fitted.items())
    return dump_scenario(result.scenario, path, header=header)
