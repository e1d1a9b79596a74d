"""End-to-end runs: source, encoder, fiber, receiver and post-processing.

``simulate`` drives the Monte Carlo chain for one scenario and returns the
report together with the frame and tags it was computed from.
``predict_report`` evaluates the expected QBER and raw key of the same
physics in closed form; calibration fits against it and tests cross-check
it against Monte Carlo.

Random numbers come from named substreams of the master seed. Monte Carlo
chunks cover fixed blocks of frame repetitions with their own substream, so
the result does not depend on the number of worker threads.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray

from .encoder import (CarvingGate, EncoderConfig, SymbolFrame, prbs_frame,
                      prepare_slices, prepare_transition)
from .exceptions import AlignmentError, SyncFailureError
from .fiber import FiberModel, propagate
from .flags import (RAISE_ON_SYNC_FAILURE, AssignRandomBitFlag, SyncFallback,
                    UseTransmittedAlignmentFlag, double_click_policy)
from .polarization import PoincareRotation, StokesVector, ensemble_mean, stokes_dop
from .protocol import (QberReport, RecordSet, binomial_3sigma, compute_qber,
                       frame_synchronize, records_from_tags, sift, temporal_filter)
from .receiver import (AnalyzerConfig, DetectorParams, TagStream, align_frame,
                       apply_dead_time, click_probabilities, detect_frame,
                       window_acceptance)
from .scenario import Scenario, substream
from .source import SliceEnsemble, slice_spectrum

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ChannelSetup:
    """Everything between Alice's state choice and Bob's splitter.

    Attributes:
        fiber: Fiber realization of the run.
        state_table: Received mean Stokes vector of every prepared state
            with unit launch power, shape (4, 4) indexed ``[previous,
            current]`` by ``2·basis + bit``; rows are equal without a drive
            bandwidth limit.
        mu_received: Mean photons per symbol reaching the splitter.
        analyzer: Bases and the alignment found for this fiber.
        detectors: Detectors with the effective dark rates.
        gate: Carving gate, ``None`` for continuous emission.
        dop_per_state: Ensemble DOP of each received state.
    """

    fiber: FiberModel
    state_table: NDArray[np.float64]
    mu_received: float
    analyzer: AnalyzerConfig
    detectors: tuple[DetectorParams, DetectorParams]
    gate: CarvingGate | None
    dop_per_state: NDArray[np.float64]

    @property
    def dop_mean(self) -> float:
        return float(np.mean(self.dop_per_state))


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """A Monte Carlo run and the data it was computed from."""

    report: QberReport
    frame: SymbolFrame
    tags: TagStream
    records: RecordSet
    dop_mean: float
    start_position: int
    basis_switch_symbol: int


def _received_mean(ensemble: SliceEnsemble, fiber: FiberModel) -> NDArray[np.float64]:
    """Ensemble-mean Stokes vector after the fiber, unit launch power."""
    return ensemble_mean(propagate(ensemble, fiber)).as_array()


def _alignment(ensemble: SliceEnsemble, fiber: FiberModel,
               encoder: EncoderConfig, analyzer: AnalyzerConfig) -> PoincareRotation:
    """Compensation a technician finds with the two bit-0 reference states."""
    states = encoder.basis_set.states
    refs = [StokesVector.from_array(
        _received_mean(prepare_slices(states[2 * b], ensemble, encoder), fiber))
        for b in (0, 1)]
    try:
        return align_frame(refs[0], analyzer.axis(0), refs[1], analyzer.axis(1))
    except AlignmentError:
        logger.warning("received references are unpolarized; no alignment applied")
        return PoincareRotation.identity()


def build_channel(scenario: Scenario, *, fiber: FiberModel | None = None
                  ) -> ChannelSetup:
    """Prepare, propagate and align every BB84 state of a scenario."""
    spectrum = scenario.source.spectrum()
    ensemble = slice_spectrum(spectrum, scenario.source.n_slices, mu=scenario.protocol.mu)
    fiber = fiber if fiber is not None else scenario.fiber.build(scenario.run.master_seed)
    encoder = scenario.encoder
    states = encoder.basis_set.states
    rate = scenario.protocol.rate_hz

    table = np.empty((4, 4, 4))
    if encoder.drive_bandwidth_hz is None:
        for cur, state in enumerate(states):
            table[:, cur] = _received_mean(prepare_slices(state, ensemble, encoder), fiber)
    else:
        for prev, previous in enumerate(states):
            for cur, state in enumerate(states):
                prepared = prepare_transition(previous, state, ensemble, encoder, rate)
                table[prev, cur] = _received_mean(prepared, fiber)

    analyzer = AnalyzerConfig.for_basis_set(encoder.basis_set)
    if scenario.receiver.align:
        analyzer = analyzer.with_compensation(
            _alignment(ensemble, fiber, encoder, analyzer))

    mu_received = (scenario.protocol.mu * fiber.transmittance
                   * 10.0 ** (-scenario.run.optical_budget_db / 10.0)
                   * scenario.receiver.transmittance)
    acceptance = scenario.receiver.dark_acceptance
    detectors = tuple(d.replace(dark_rate_cps=d.dark_rate_cps * acceptance)
                      for d in (scenario.detector0, scenario.detector1))
    duty = encoder.carve_duty
    gate = None if duty >= 1.0 else CarvingGate(rate, duty)
    dop = stokes_dop(table.mean(axis=0))
    return ChannelSetup(fiber=fiber, state_table=table, mu_received=mu_received,
                        analyzer=analyzer, detectors=detectors,  # type: ignore[arg-type]
                        gate=gate, dop_per_state=dop)


def received_frame_stokes(setup: ChannelSetup, frame: SymbolFrame) -> NDArray[np.float64]:
    """Mean received Stokes vector (photons per symbol) of every frame position."""
    current = frame.state_indices()
    previous = np.roll(current, 1)
    return setup.state_table[previous, current] * setup.mu_received


def scenario_frame(scenario: Scenario) -> SymbolFrame:
    """Alice's frame for a scenario."""
    protocol = scenario.protocol
    return prbs_frame(protocol.prbs_order, protocol.frame_length, protocol.rate_hz,
                      protocol.mu, scenario.run.master_seed)


def _chunk_plan(scenario: Scenario) -> list[tuple[int, int, int, int]]:
    """``(basis, chunk, first_frame, n_frames)`` of every Monte Carlo chunk."""
    half = scenario.n_frames // 2
    step = scenario.run.chunk_frames
    plan = []
    for basis in (0, 1):
        for chunk, start in enumerate(range(0, half, step)):
            plan.append((basis, chunk, basis * half + start, min(step, half - start)))
    return plan


def simulate(scenario: Scenario, *, threads: int | None = None,
             sync_fallback: SyncFallback = RAISE_ON_SYNC_FAILURE,
             setup: ChannelSetup | None = None) -> SimulationResult:
    """Run the Monte Carlo chain of one scenario.

    Bob measures basis 0 during the first half of the transmitted frames and
    basis 1 during the second half. Alice starts her cyclic transmission at
    a random frame position that Bob recovers by frame synchronization.

    Args:
        scenario: Validated scenario.
        threads: Worker threads; defaults to ``scenario.run.threads``.
        sync_fallback: What to do if no correlation peak is found.
        setup: Precomputed channel, e.g. shared by a sweep.

    Raises:
        SyncFailureError: If synchronization fails and the fallback is
            ``RAISE_ON_SYNC_FAILURE``.
        EmptyEnsembleError: If no bit survives sifting.
    """
    seed = scenario.run.master_seed
    setup = setup if setup is not None else build_channel(scenario)
    frame = scenario_frame(scenario)
    n_positions = len(frame)
    received = received_frame_stokes(setup, frame)
    start = int(substream(seed, "alice").integers(n_positions))
    det0, det1 = setup.detectors
    offset = scenario.receiver.offset_s

    def run_chunk(basis: int, chunk: int, first: int, n_frames: int) -> TagStream:
        return detect_frame(frame, received, setup.analyzer, det0, det1,
                            substream(seed, "chunk", basis, chunk),
                            basis_index=basis, n_frames=n_frames, first_frame=first,
                            start_position=start, gate=setup.gate, t0_s=offset,
                            dead_time=False)

    n_jobs = threads if threads is not None else scenario.run.threads
    plan = _chunk_plan(scenario)
    chunks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(run_chunk)(*item) for item in plan)
    tags = apply_dead_time(TagStream.merge(chunks), (det0.dead_time_s, det1.dead_time_s))

    protocol = scenario.protocol
    switch = (scenario.n_frames // 2) * n_positions
    windowed = temporal_filter(tags, protocol.rate_hz,
                               scenario.receiver.window_fraction, offset)
    records = records_from_tags(windowed, switch)

    sync_ok = True
    if scenario.run.noise_floor or protocol.mu == 0.0:
        shift = start
    else:
        try:
            shift = frame_synchronize(records, frame, protocol.max_shift)
        except SyncFailureError as exc:
            if not isinstance(sync_fallback, UseTransmittedAlignmentFlag):
                raise
            logger.warning("frame sync failed for %s (%s); using transmitted "
                           "alignment", scenario.name, exc)
            shift, sync_ok = start, False

    key = sift(frame, records, shift,
               policy=double_click_policy(protocol.double_click),
               rng=substream(seed, "sift"))
    duration = scenario.duration_s
    report = compute_qber(key, duration, n_batches=protocol.n_batches,
                          basis_durations_s=(0.5 * duration, 0.5 * duration),
                          sync_ok=sync_ok, shift=shift)
    logger.info("%s: QBER %.4f, raw key %.1f b/s over %d tags",
                scenario.name, report.qber, report.raw_key_bps, len(tags))
    return SimulationResult(report=report, frame=frame, tags=tags, records=records,
                            dop_mean=setup.dop_mean, start_position=start,
                            basis_switch_symbol=switch)


def run_single(scenario: Scenario) -> QberReport:
    """QBER report of one Monte Carlo run."""
    return simulate(scenario).report


@dataclass(frozen=True)
class Prediction:
    """Expected figures of a scenario in the long-run limit.

    Attributes:
        qber: Expected error fraction of the sifted key.
        raw_key_bps: Expected sifted bits per second.
        error_bps: Expected erroneous sifted bits per second.
        dop_mean: Mean ensemble DOP of the received states.
        click_rate_cps: Expected raw click rate of each detector after
            dead time.
        per_basis_qber: Expected QBER of each basis.
    """

    qber: float
    raw_key_bps: float
    error_bps: float
    dop_mean: float
    click_rate_cps: tuple[float, float]
    per_basis_qber: tuple[float, float] = field(default=(0.0, 0.0))

    def qber_3sigma(self, duration_s: float) -> float:
        """Binomial three-sigma spread after ``duration_s`` seconds."""
        count = int(self.raw_key_bps * duration_s)
        return binomial_3sigma(int(round(self.qber * count)), count)


def predict_report(scenario: Scenario, *, setup: ChannelSetup | None = None) -> Prediction:
    """Expected QBER and raw key of a scenario without sampling.

    Uses the per-state click probabilities of the Monte Carlo, the share of
    signal and dark clicks falling into the temporal window (signal tags
    smeared by detector jitter), the double-click policy and a
    non-paralyzable dead-time correction of each detector.
    """
    setup = setup if setup is not None else build_channel(scenario)
    rate = scenario.protocol.rate_hz
    period = 1.0 / rate
    window = scenario.receiver.window_fraction
    duty = 1.0 if setup.gate is None else setup.gate.duty
    det0, det1 = setup.detectors
    signal_acceptance = np.array([
        window_acceptance(duty * period, window * period, det.jitter_s, period)
        for det in (det0, det1)])
    random_bit = isinstance(double_click_policy(scenario.protocol.double_click),
                            AssignRandomBitFlag)

    # (previous, current) pairs are equally likely in a balanced PRBS frame
    pairs = setup.state_table.reshape(16, 4) * setup.mu_received
    current = np.tile(np.arange(4), 4)
    alice_basis, alice_bit = np.divmod(current, 2)

    accepted = np.empty((2, 16, 2))
    raw_clicks = np.zeros(2)
    for basis in (0, 1):
        arms = setup.analyzer.arm_intensities(pairs, basis)
        p_click, share = click_probabilities(arms, det0, det1, period)
        accepted[basis] = p_click * (share * signal_acceptance[None, :] + (1.0 - share) * window)
        raw_clicks += 0.5 * p_click.mean(axis=0) * rate
    dead = np.array([det0.dead_time_s, det1.dead_time_s])
    live = 1.0 / (1.0 + raw_clicks * dead)
    accepted *= live[None, None, :]

    sifted = np.zeros(2)
    errors = np.zeros(2)
    for basis in (0, 1):
        p0, p1 = accepted[basis, :, 0], accepted[basis, :, 1]
        single = np.stack([p0 * (1.0 - p1), p1 * (1.0 - p0)], axis=1)
        both = p0 * p1
        match = alice_basis == basis
        wrong = np.where(alice_bit == 0, single[:, 1], single[:, 0])
        kept = single.sum(axis=1)
        if random_bit:
            kept = kept + both
            wrong = wrong + 0.5 * both
        sifted[basis] = float(np.mean(np.where(match, kept, 0.0)))
        errors[basis] = float(np.mean(np.where(match, wrong, 0.0)))

    sifted_bps = 0.5 * rate * float(sifted.sum())
    error_bps = 0.5 * rate * float(errors.sum())
    per_basis = tuple(float(e / s) if s > 0 else math.nan
                      for e, s in zip(errors, sifted))
    qber = error_bps / sifted_bps if sifted_bps > 0 else math.nan
    return Prediction(qber=qber, raw_key_bps=sifted_bps, error_bps=error_bps,
                      dop_mean=setup.dop_mean,
                      click_rate_cps=(float(raw_clicks[0] * live[0]),
                                      float(raw_clicks[1] * live[1])),
                      per_basis_qber=per_basis)  # type: ignore[arg-type]

