"""Bob's polarization analyzer and free-running single-photon detectors.

The receiver is modelled at the level of mean photon numbers: every frame
position carries the compensated mean Stokes vector of the received
ensemble (in photons per symbol), a polarizing splitter divides it into two
arm intensities and each detector clicks with the merged-Poisson probability
``1 - exp(-efficiency·μ_arm - dark_rate·T)``.

Frames are transmitted cyclically, so clicks over many repetitions of one
frame position are drawn as a single binomial count and then spread over
distinct repetitions. Dead time is applied last, per channel, on the merged
and time-ordered stream.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any, Final, overload

import numpy as np
from mixinforge import sort_dict_by_keys
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .encoder import Bb84State, BasisSet, CarvingGate, SymbolFrame
from .exceptions import AlignmentError, ScenarioConfigError
from .parameters import ConfigObject
from .polarization import (PoincareRotation, StokesVector, _unit,
                           minimal_rotation, rotation_matrices)

logger = logging.getLogger(__name__)

N_CHANNELS: Final[int] = 2
ORTHOGONALITY_TOLERANCE: Final[float] = 1e-6


class DetectorParams(ConfigObject):
    """One free-running SPAD.

    Attributes:
        efficiency: Detection efficiency in (0, 1].
        dark_rate_cps: Dark count rate (counts/s).
        dead_time_s: Non-paralyzable dead time after each click.
        jitter_s: Gaussian standard deviation of the tag timing.
    """

    def __init__(self,
                 *,
                 efficiency: float = 0.1,
                 dark_rate_cps: float = 0.0,
                 dead_time_s: float = 0.0,
                 jitter_s: float = 0.0,
                 name: str = "detector"):
        self.efficiency = float(efficiency)
        self.dark_rate_cps = float(dark_rate_cps)
        self.dead_time_s = float(dead_time_s)
        self.jitter_s = float(jitter_s)
        self.name = str(name)
        violations = []
        if not 0.0 < self.efficiency <= 1.0:
            violations.append(f"{name}.efficiency: must be in (0, 1], got {self.efficiency}")
        if self.dark_rate_cps < 0.0:
            violations.append(f"{name}.dark_rate_cps: must be >= 0")
        if self.dead_time_s < 0.0:
            violations.append(f"{name}.dead_time_s: must be >= 0")
        if self.jitter_s < 0.0:
            violations.append(f"{name}.jitter_s: must be >= 0")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(efficiency=self.efficiency,
                      dark_rate_cps=self.dark_rate_cps,
                      dead_time_s=self.dead_time_s,
                      jitter_s=self.jitter_s,
                      name=self.name)
        return sort_dict_by_keys(params)

    @property
    def max_count_rate_cps(self) -> float:
        """Saturation rate ``1/dead_time``; infinite without dead time."""
        return math.inf if self.dead_time_s == 0.0 else 1.0 / self.dead_time_s


@dataclass(frozen=True)
class TimeTag:
    """A single detector event."""

    channel: int
    t_s: float


@dataclass(frozen=True, eq=False)
class TagStream:
    """Time-ordered detector events held as parallel arrays.

    Iterating yields ``TimeTag`` objects; indexing with an integer returns a
    ``TimeTag`` and with a slice or mask returns another stream.
    """

    channel: NDArray[np.int8] = field(
        default_factory=lambda: np.empty(0, dtype=np.int8))
    t_s: NDArray[np.float64] = field(
        default_factory=lambda: np.empty(0, dtype=float))

    def __post_init__(self) -> None:
        channel = np.asarray(self.channel, dtype=np.int8).reshape(-1)
        t_s = np.asarray(self.t_s, dtype=float).reshape(-1)
        if channel.shape != t_s.shape:
            raise ValueError("channel and time arrays must have equal length")
        order = np.argsort(t_s, kind="stable")
        channel, t_s = channel[order], t_s[order]
        channel.setflags(write=False)
        t_s.setflags(write=False)
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "t_s", t_s)

    @classmethod
    def from_tags(cls, tags: Sequence[TimeTag]) -> TagStream:
        return cls(np.array([t.channel for t in tags], dtype=np.int8),
                   np.array([t.t_s for t in tags], dtype=float))

    @classmethod
    def merge(cls, streams: Sequence[TagStream]) -> TagStream:
        """Concatenate streams and restore time order."""
        if not streams:
            return cls()
        return cls(np.concatenate([s.channel for s in streams]),
                   np.concatenate([s.t_s for s in streams]))

    def __len__(self) -> int:
        return len(self.t_s)

    def __iter__(self) -> Iterator[TimeTag]:
        for c, t in zip(self.channel.tolist(), self.t_s.tolist()):
            yield TimeTag(c, t)

    @overload
    def __getitem__(self, key: int) -> TimeTag: ...

    @overload
    def __getitem__(self, key: slice | NDArray[Any]) -> TagStream: ...

    def __getitem__(self, key: int | slice | NDArray[Any]) -> TimeTag | TagStream:
        if isinstance(key, (int, np.integer)):
            return TimeTag(int(self.channel[key]), float(self.t_s[key]))
        return TagStream(self.channel[key], self.t_s[key])

    def counts(self) -> NDArray[np.int64]:
        """Number of tags per channel."""
        return np.bincount(self.channel.astype(np.int64), minlength=N_CHANNELS)

    def for_channel(self, channel: int) -> NDArray[np.float64]:
        """Sorted tag times of one channel."""
        return self.t_s[self.channel == channel]


@dataclass(frozen=True)
class AnalyzerConfig:
    """Measurement bases and the manual alignment in front of the splitter.

    Attributes:
        basis_axes: Pass-arm sphere axis for basis 0 and for basis 1. The
            blocking arm of each splitter is the antipodal direction.
        compensation: Rotation applied to the received light before the
            splitter.
    """

    basis_axes: tuple[tuple[float, float, float], tuple[float, float, float]]
    compensation: PoincareRotation = field(default_factory=PoincareRotation.identity)

    def __post_init__(self) -> None:
        axes = tuple(tuple(float(x) for x in _unit(a)) for a in self.basis_axes)
        if len(axes) != 2:
            raise ScenarioConfigError(["receiver.basis_axes: exactly two bases required"])
        if abs(float(np.dot(axes[0], axes[1]))) > ORTHOGONALITY_TOLERANCE:
            raise ScenarioConfigError(["receiver.basis_axes: bases must be orthogonal"])
        object.__setattr__(self, "basis_axes", axes)

    @classmethod
    def for_basis_set(cls, basis_set: BasisSet,
                      compensation: PoincareRotation | None = None
                      ) -> AnalyzerConfig:
        """Analyzer measuring the bases of a BB84 basis set."""
        basis_set = BasisSet(basis_set)
        axes = (tuple(basis_set.basis_axis(0)), tuple(basis_set.basis_axis(1)))
        return cls(axes, compensation or PoincareRotation.identity())  # type: ignore[arg-type]

    def axis(self, basis_index: int) -> NDArray[np.float64]:
        return np.array(self.basis_axes[basis_index])

    def with_compensation(self, compensation: PoincareRotation) -> AnalyzerConfig:
        return AnalyzerConfig(self.basis_axes, compensation)

    def compensate(self, stokes: ArrayLike) -> NDArray[np.float64]:
        """Apply the compensation to an (n, 4) Stokes array."""
        stokes = np.atleast_2d(np.asarray(stokes, dtype=float))
        out = np.empty_like(stokes)
        out[:, 0] = stokes[:, 0]
        out[:, 1:] = stokes[:, 1:] @ self.compensation.matrix.T
        return out * self.compensation.transmittance

    def arm_intensities(self, stokes: ArrayLike, basis_index: int
                        ) -> NDArray[np.float64]:
        """Pass (bit 0) and block (bit 1) arm intensities, shape (n, 2).

        Rows sum to the compensated ``s0``.
        """
        compensated = self.compensate(stokes)
        projection = compensated[:, 1:] @ self.axis(basis_index)
        passed = np.clip(0.5 * (compensated[:, 0] + projection), 0.0, None)
        blocked = np.clip(compensated[:, 0] - passed, 0.0, None)
        return np.stack([passed, blocked], axis=1)


def _polarized_direction(s: StokesVector) -> NDArray[np.float64]:
    norm = float(np.linalg.norm(s.polarized_part))
    if norm == 0.0 or s.s0 == 0.0:
        raise AlignmentError("reference carries no polarized power", dop=0.0)
    return s.polarized_part / norm


def align_compensation(reference_out: StokesVector,
                       target_axis: ArrayLike) -> PoincareRotation:
    """Minimal rotation bringing a received reference onto an analyzer axis.

    Args:
        reference_out: Reference state as received after the channel.
        target_axis: Sphere direction the reference should end on.

    Returns:
        The smallest-angle rotation mapping the normalized polarized part of
        ``reference_out`` onto ``target_axis``. The DOP is not restored.

    Raises:
        AlignmentError: If the reference has no polarized part.
    """
    direction = _polarized_direction(reference_out)
    return PoincareRotation(minimal_rotation(direction, target_axis))


def align_frame(reference_a: StokesVector, target_a: ArrayLike,
                reference_b: StokesVector, target_b: ArrayLike
                ) -> PoincareRotation:
    """Rotation aligning two received references to two analyzer axes.

    The first reference is mapped exactly; the second is then brought as
    close as possible to its target by turning about the first target axis.
    A second reference collinear with the first leaves the minimal rotation.

    Raises:
        AlignmentError: If either reference has no polarized part.
    """
    first = align_compensation(reference_a, target_a)
    axis_a = _unit(target_a)
    moved_b = first.matrix @ _polarized_direction(reference_b)
    goal_b = _unit(target_b)
    moved_perp = moved_b - np.dot(moved_b, axis_a) * axis_a
    goal_perp = goal_b - np.dot(goal_b, axis_a) * axis_a
    if np.linalg.norm(moved_perp) < 1e-9 or np.linalg.norm(goal_perp) < 1e-9:
        logger.debug("second reference collinear with the first; using minimal rotation")
        return first
    moved_perp /= np.linalg.norm(moved_perp)
    goal_perp /= np.linalg.norm(goal_perp)
    angle = math.atan2(float(np.dot(axis_a, np.cross(moved_perp, goal_perp))),
                       float(np.dot(moved_perp, goal_perp)))
    twist = rotation_matrices(axis_a[None, :], np.array([angle]))[0]
    return PoincareRotation(twist @ first.matrix)


def click_probabilities(arm_photons: ArrayLike, det0: DetectorParams,
                        det1: DetectorParams, symbol_period_s: float
                        ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-symbol click probability and signal share of every channel.

    Args:
        arm_photons: Mean photons per symbol in each arm, shape (n, 2).
        det0: Detector on the pass arm.
        det1: Detector on the blocking arm.
        symbol_period_s: Symbol duration.

    Returns:
        ``(p_click, signal_share)``, both of shape (n, 2).
    """
    arms = np.atleast_2d(np.asarray(arm_photons, dtype=float))
    efficiency = np.array([det0.efficiency, det1.efficiency])
    dark = np.array([det0.dark_rate_cps, det1.dark_rate_cps]) * symbol_period_s
    signal = arms * efficiency
    total = signal + dark
    p_click = -np.expm1(-total)
    share = np.divide(signal, total, out=np.zeros_like(total), where=total > 0.0)
    return p_click, share


def window_acceptance(emission_s: float, window_s: float, jitter_s: float,
                      period_s: float) -> float:
    """Fraction of signal tags that land inside the analysis window.

    Signal photons arrive uniformly over the emission window and the
    detector adds Gaussian jitter; both windows are centered on the symbol.
    A window covering the whole period keeps every tag.

    Args:
        emission_s: Width of the emission window (the full period when
            the source is not carved).
        window_s: Width of the analysis window.
        jitter_s: Standard deviation of the detector timing.
        period_s: Symbol period.

    Returns:
        The accepted fraction in [0, 1].

    Raises:
        ValueError: If a width is not positive or the jitter is negative.

    >>> window_acceptance(0.5e-9, 0.5e-9, 0.0, 1e-9)
    1.0
    >>> window_acceptance(1e-8, 5e-9, 0.0, 1e-8)
    0.5
    """
    if emission_s <= 0.0 or window_s <= 0.0 or period_s <= 0.0:
        raise ValueError("emission, window and period must be > 0")
    if jitter_s < 0.0:
        raise ValueError(f"jitter_s must be >= 0, got {jitter_s}")
    if window_s >= period_s:
        return 1.0
    if jitter_s == 0.0:
        return min(emission_s, window_s) / emission_s

    def ramp(x: float) -> float:
        # antiderivative of the jitter CDF
        z = x / jitter_s
        return jitter_s * (z * stats.norm.cdf(z) + stats.norm.pdf(z))

    half_w, half_e = 0.5 * window_s, 0.5 * emission_s
    inside = (ramp(half_w + half_e) - ramp(half_w - half_e)
              - ramp(half_e - half_w) + ramp(-half_w - half_e))
    return float(np.clip(inside / emission_s, 0.0, 1.0))


def apply_dead_time(stream: TagStream, dead_times_s: Sequence[float]) -> TagStream:
    """Drop tags arriving within the dead time of the last accepted tag.

    Dead time is non-paralyzable: suppressed clicks do not extend it.
    """
    keep = np.ones(len(stream), dtype=bool)
    for channel, dead in enumerate(dead_times_s):
        if dead <= 0.0:
            continue
        positions = np.flatnonzero(stream.channel == channel)
        times = stream.t_s[positions]
        last = -math.inf
        for idx, t in zip(positions.tolist(), times.tolist()):
            if t - last < dead:
                keep[idx] = False
            else:
                last = t
    return stream[keep]


def _click_repetitions(counts: NDArray[np.int64], n_frames: int,
                       rng: np.random.Generator
                       ) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Distinct repetition indices for every (position, channel) count."""
    flat = counts.reshape(-1)
    cells = np.flatnonzero(flat)
    single = cells[flat[cells] == 1]
    reps = [rng.integers(0, n_frames, size=len(single))]
    owners = [single]
    for cell in cells[flat[cells] > 1].tolist():
        k = int(flat[cell])
        reps.append(rng.choice(n_frames, size=k, replace=False))
        owners.append(np.full(k, cell, dtype=np.int64))
    return np.concatenate(owners).astype(np.int64), np.concatenate(reps).astype(np.int64)


def detect_frame(frame: SymbolFrame,
                 received_per_symbol: ArrayLike,
                 analyzer: AnalyzerConfig,
                 det0: DetectorParams,
                 det1: DetectorParams,
                 rng: np.random.Generator,
                 *,
                 basis_index: int = 0,
                 n_frames: int = 1,
                 first_frame: int = 0,
                 start_position: int = 0,
                 gate: CarvingGate | None = None,
                 t0_s: float = 0.0,
                 dead_time: bool = True) -> TagStream:
    """Simulate the detector clicks of one acquisition.

    The acquisition sees ``n_frames`` cyclic repetitions of the frame.
    Received symbol ``k = (first_frame + r)·F + i`` carries Alice's frame
    position ``(i + start_position) mod F``.

    Args:
        frame: Alice's frame (length ``F``).
        received_per_symbol: Mean received Stokes vector of every frame
            position in photons per symbol, shape (F, 4).
        analyzer: Bases and alignment in front of the splitter.
        det0: Detector on the pass arm (bit 0).
        det1: Detector on the blocking arm (bit 1).
        rng: Random source; the result is deterministic given its state.
        basis_index: Analyzer basis used throughout the acquisition.
        n_frames: Number of frame repetitions simulated.
        first_frame: Index of the first repetition inside the acquisition.
        start_position: Frame position Alice emits at received symbol zero.
        gate: Carving gate; ``None`` means continuous emission.
        t0_s: Start time of the acquisition.
        dead_time: Whether to apply dead time before returning; chunked
            callers merge first and apply it once.

    Returns:
        The time-ordered tag stream.
    """
    received = np.atleast_2d(np.asarray(received_per_symbol, dtype=float))
    n_positions = len(frame)
    if received.shape != (n_positions, 4):
        raise ScenarioConfigError(
            [f"receiver: expected ({n_positions}, 4) received states, got {received.shape}"])
    period = frame.symbol_period_s
    window = period if gate is None else gate.window_s

    aligned = np.roll(received, -int(start_position), axis=0)
    arms = analyzer.arm_intensities(aligned, basis_index)
    p_click, share = click_probabilities(arms, det0, det1, period)
    counts = rng.binomial(int(n_frames), p_click)
    cells, reps = _click_repetitions(counts, int(n_frames), rng)
    if len(cells) == 0:
        return TagStream()

    positions, channels = np.divmod(cells, N_CHANNELS)
    symbols = (int(first_frame) + reps) * n_positions + positions
    order = np.lexsort((channels, symbols))
    positions, channels, symbols = positions[order], channels[order], symbols[order]

    is_signal = rng.random(len(symbols)) < share[positions, channels]
    spread = np.where(is_signal, window, period)
    times = (t0_s + (symbols + 0.5) * period
             + rng.uniform(-0.5, 0.5, size=len(symbols)) * spread)
    jitter = np.array([det0.jitter_s, det1.jitter_s])[channels]
    if np.any(jitter > 0.0):
        times = times + rng.normal(size=len(symbols)) * jitter

    stream = TagStream(channels.astype(np.int8), times)
    if dead_time:
        stream = apply_dead_time(stream, (det0.dead_time_s, det1.dead_time_s))
    return stream


def classical_trace(states: Sequence[Bb84State], analyzer_axis: ArrayLike,
                    samples_per_symbol: int) -> NDArray[np.float64]:
    """Balanced-detector waveform of ideal prepared states.

    States on the analyzer axis give ±1; conjugate-basis states give 0.
    """
    if samples_per_symbol < 1:
        raise ScenarioConfigError(["trace.samples_per_symbol: must be >= 1"])
    axis = _unit(analyzer_axis)
    levels = np.array([float(np.dot(Bb84State(s).axis, axis)) for s in states])
    return np.repeat(levels, samples_per_symbol)


def received_trace(received: Sequence[StokesVector], analyzer_axis: ArrayLike,
                   samples_per_symbol: int) -> NDArray[np.float64]:
    """Balanced-detector waveform ``(P_pass - P_block)/s0`` of received light.

    The outer levels shrink with the degree of polarization of each state.
    """
    if samples_per_symbol < 1:
        raise ScenarioConfigError(["trace.samples_per_symbol: must be >= 1"])
    axis = _unit(analyzer_axis)
    levels = np.array([0.0 if s.s0 == 0.0 else float(np.dot(s.polarized_part, axis)) / s.s0
                       for s in received])
    return np.repeat(levels, samples_per_symbol)
