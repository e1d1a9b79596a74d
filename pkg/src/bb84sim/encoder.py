"""Alice's state preparation.

Covers PRBS framing, the BB84 state mappings of both basis sets, the two
encoder architectures, and pulse carving:

- ``four-modulator``: independent intensity-modulated paths combined through
  a broadband half-wave plate. Wavelength independent; only the finite
  extinction ratio degrades the states.
- ``dualpol-iq``: a dual-polarization I/Q modulator steering the output in
  the S2/S3 plane through the X/Y phase φ. The X/Y skew τ inside the
  transmitter makes φ wavelength dependent, which depolarizes broadband
  input even back-to-back.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Any, Final

import numpy as np
from mixinforge import sort_dict_by_keys
from numpy.typing import ArrayLike, NDArray

from .exceptions import InvalidStateError, ScenarioConfigError
from .parameters import ConfigObject
from .polarization import StokesVector
from .prbs import check_order, prbs_bits, sequence_period, start_state
from .source import SliceEnsemble, optical_frequency_hz

logger = logging.getLogger(__name__)

SKEW_QUADRATURE_POINTS: Final[int] = 32
DRIVE_QUADRATURE_POINTS: Final[int] = 24


class Bb84State(StrEnum):
    """The six polarization states on the Poincaré sphere axes."""

    H = "H"
    V = "V"
    D = "D"
    A = "A"
    R = "R"
    L = "L"

    @property
    def axis(self) -> NDArray[np.float64]:
        """Unit Stokes 3-vector of the state."""
        return np.array(_STATE_AXES[self], dtype=float)

    @property
    def stokes(self) -> StokesVector:
        """Fully polarized unit-power Stokes vector of the state."""
        return StokesVector(1.0, *_STATE_AXES[self])


_STATE_AXES: Final[dict[Bb84State, tuple[float, float, float]]] = {
    Bb84State.H: (1.0, 0.0, 0.0), Bb84State.V: (-1.0, 0.0, 0.0),
    Bb84State.D: (0.0, 1.0, 0.0), Bb84State.A: (0.0, -1.0, 0.0),
    Bb84State.R: (0.0, 0.0, 1.0), Bb84State.L: (0.0, 0.0, -1.0),
}

_STATE_PHASES: Final[dict[Bb84State, float]] = {
    Bb84State.D: 0.0, Bb84State.R: 0.5 * math.pi,
    Bb84State.A: math.pi, Bb84State.L: 1.5 * math.pi,
}
_PHASE_ORDER: Final[tuple[Bb84State, ...]] = (
    Bb84State.D, Bb84State.R, Bb84State.A, Bb84State.L)


class BasisSet(StrEnum):
    """Pairs of conjugate bases used by Alice and Bob."""

    HV_DA = "HV_DA"
    DA_RL = "DA_RL"

    @property
    def states(self) -> tuple[Bb84State, Bb84State, Bb84State, Bb84State]:
        """States ordered by ``2·basis_index + bit``."""
        return _BASIS_STATES[self]

    def basis_axis(self, basis_index: int) -> NDArray[np.float64]:
        """Sphere direction of the bit-0 state of a basis."""
        return self.states[2 * basis_index].axis


_BASIS_STATES: Final[dict[BasisSet, tuple[Bb84State, ...]]] = {
    BasisSet.HV_DA: (Bb84State.H, Bb84State.V, Bb84State.D, Bb84State.A),
    BasisSet.DA_RL: (Bb84State.D, Bb84State.A, Bb84State.R, Bb84State.L),
}


class Architecture(StrEnum):
    """Encoder hardware variants."""

    FOUR_MODULATOR = "four-modulator"
    DUALPOL_IQ = "dualpol-iq"


class EncoderConfig(ConfigObject):
    """Static configuration of Alice's encoder.

    Attributes:
        architecture: Encoder hardware variant.
        basis_set: States the encoder prepares.
        extinction_db: Intensity extinction ratio of state preparation.
        tx_dgd_ps: X/Y skew inside the transmitter (ps); always zero for
            the four-modulator architecture.
        tx_dgd_spread: Fraction of the skew that wanders during an
            acquisition; the skew is uniform on
            ``[(1 - spread)·tx_dgd_ps, tx_dgd_ps]``.
        carve_duty: Emitting fraction of each symbol period.
        drive_bandwidth_hz: Optional first-order bandwidth of the phase
            drive; ``None`` means unlimited.
    """

    def __init__(self,
                 *,
                 architecture: Architecture | str = Architecture.FOUR_MODULATOR,
                 basis_set: BasisSet | str = BasisSet.HV_DA,
                 extinction_db: float = 30.0,
                 tx_dgd_ps: float = 0.0,
                 tx_dgd_spread: float = 0.0,
                 carve_duty: float = 1.0,
                 drive_bandwidth_hz: float | None = None):
        """Validate and store the encoder configuration.

        Raises:
            ScenarioConfigError: Listing every invalid field.
        """
        violations: list[str] = []
        try:
            self.architecture = Architecture(architecture)
        except ValueError:
            violations.append(f"encoder.architecture: unknown {architecture!r}")
            self.architecture = Architecture.FOUR_MODULATOR
        try:
            self.basis_set = BasisSet(basis_set)
        except ValueError:
            violations.append(f"encoder.basis_set: unknown {basis_set!r}")
            self.basis_set = BasisSet.HV_DA
        self.extinction_db = float(extinction_db)
        self.tx_dgd_ps = float(tx_dgd_ps)
        self.tx_dgd_spread = float(tx_dgd_spread)
        self.carve_duty = float(carve_duty)
        self.drive_bandwidth_hz = (None if drive_bandwidth_hz is None
                                   else float(drive_bandwidth_hz))

        if not self.extinction_db > 0.0:
            violations.append("encoder.extinction_db: must be > 0")
        if self.tx_dgd_ps < 0.0:
            violations.append("encoder.tx_dgd_ps: must be >= 0")
        if not 0.0 <= self.tx_dgd_spread <= 1.0:
            violations.append("encoder.tx_dgd_spread: must be in [0, 1]")
        if not 0.0 < self.carve_duty <= 1.0:
            violations.append("encoder.carve_duty: must be in (0, 1]")
        if self.drive_bandwidth_hz is not None and not self.drive_bandwidth_hz > 0.0:
            violations.append("encoder.drive_bandwidth_hz: must be > 0 when set")
        if (self.architecture is Architecture.DUALPOL_IQ
                and self.basis_set is not BasisSet.DA_RL):
            violations.append("encoder.basis_set: dualpol-iq prepares only DA_RL")
        if violations:
            raise ScenarioConfigError(violations)

        if self.architecture is Architecture.FOUR_MODULATOR and self.tx_dgd_ps != 0.0:
            logger.warning("four-modulator encoder ignores tx_dgd_ps=%s",
                           self.tx_dgd_ps)
            self.tx_dgd_ps = 0.0
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        """Return the constructor parameters, sorted by name."""
        params = dict(architecture=str(self.architecture),
                      basis_set=str(self.basis_set),
                      extinction_db=self.extinction_db,
                      tx_dgd_ps=self.tx_dgd_ps,
                      tx_dgd_spread=self.tx_dgd_spread,
                      carve_duty=self.carve_duty,
                      drive_bandwidth_hz=self.drive_bandwidth_hz)
        return sort_dict_by_keys(params)

    @property
    def visibility(self) -> float:
        """Polarized-part scale (ER − 1)/(ER + 1) of the extinction ratio."""
        ratio = 10.0 ** (self.extinction_db / 10.0)
        return (ratio - 1.0) / (ratio + 1.0)


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """Alice's PRBS-derived frame of (basis_index, bit) symbols.

    The frame is transmitted cyclically; ``basis`` and ``bits`` are
    read-only arrays of equal length.
    """

    basis: NDArray[np.uint8]
    bits: NDArray[np.uint8]
    rate_hz: float
    mu: float
    prbs_order: int
    frame_id: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        basis = np.asarray(self.basis, dtype=np.uint8)
        bits = np.asarray(self.bits, dtype=np.uint8)
        if len(basis) == 0 or basis.shape != bits.shape:
            raise ScenarioConfigError(["frame: needs matching, non-empty basis/bit arrays"])
        if not self.rate_hz > 0.0:
            raise ScenarioConfigError([f"frame.rate_hz: must be > 0, got {self.rate_hz}"])
        basis.setflags(write=False)
        bits.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.basis)

    @property
    def symbols(self) -> list[tuple[int, int]]:
        """The frame as a list of ``(basis_index, bit)`` pairs."""
        return list(zip(self.basis.tolist(), self.bits.tolist()))

    @property
    def symbol_period_s(self) -> float:
        return 1.0 / self.rate_hz

    def state_indices(self) -> NDArray[np.int64]:
        """Index ``2·basis + bit`` into ``BasisSet.states``."""
        return 2 * self.basis.astype(np.int64) + self.bits.astype(np.int64)

    def labels(self, basis_set: BasisSet) -> list[str]:
        """State label of every symbol."""
        states = basis_set.states
        return [str(states[i]) for i in self.state_indices()]


def prbs_frame(order: int, length: int, rate_hz: float, mu: float, seed: int,
               *, frame_id: int = 0) -> SymbolFrame:
    """Build a frame from a maximal-length register.

    Consecutive output bits are paired: even bits select the basis, odd bits
    carry the value.

    Args:
        order: Register order in [7, 31].
        length: Number of symbols, at least two.
        rate_hz: Symbol rate.
        mu: Launch mean photon number per symbol.
        seed: Master seed; the register start state derives from
            ``(seed, frame_id)``.
        frame_id: Frame counter.

    Raises:
        ScenarioConfigError: If the order or length is unsupported.
    """
    check_order(order)
    if length < 2:
        raise ScenarioConfigError([f"protocol.frame_symbols: must be >= 2, got {length}"])
    if length > sequence_period(order):
        logger.warning("frame of %d symbols exceeds the PRBS symbol period %d; "
                       "cyclic shifts become ambiguous", length,
                       sequence_period(order))
    bits = prbs_bits(order, 2 * length, start_state(order, seed, frame_id))
    return SymbolFrame(bits[0::2], bits[1::2], float(rate_hz), float(mu),
                       order, frame_id, seed)


def encode_state(basis_index: int, bit: int, basis_set: BasisSet) -> Bb84State:
    """Map a ``(basis_index, bit)`` pair to the prepared state."""
    return BasisSet(basis_set).states[2 * int(basis_index) + int(bit)]


def phase_to_stokes(phi: float) -> StokesVector:
    """Continuous balanced-power state ``(1, 0, cos φ, sin φ)``."""
    return StokesVector(1.0, 0.0, math.cos(phi), math.sin(phi))


def phase_to_state(phi: float) -> Bb84State:
    """State nearest to phase ``phi`` among D (0), R (π/2), A (π), L (3π/2)."""
    quadrant = round(phi / (0.5 * math.pi)) % 4
    return _PHASE_ORDER[quadrant]


def state_phase(state: Bb84State) -> float:
    """Drive phase producing a state of the S2/S3 plane.

    Raises:
        InvalidStateError: For H or V, which the I/Q encoder cannot produce.
    """
    try:
        return _STATE_PHASES[Bb84State(state)]
    except KeyError as exc:
        raise InvalidStateError(f"state {state} is outside the S2/S3 plane",
                                quantity="state") from exc


def _skew_delays_ps(cfg: EncoderConfig) -> NDArray[np.float64]:
    if cfg.tx_dgd_spread == 0.0:
        return np.array([cfg.tx_dgd_ps])
    fractions = (np.arange(SKEW_QUADRATURE_POINTS) + 0.5) / SKEW_QUADRATURE_POINTS
    return cfg.tx_dgd_ps * (1.0 - cfg.tx_dgd_spread * fractions)


def _iq_stokes(phases: ArrayLike, ensemble: SliceEnsemble,
               cfg: EncoderConfig) -> NDArray[np.float64]:
    """Average phase-to-Stokes over drive phases and skew wander."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    nu0 = float(optical_frequency_hz(ensemble.center_nm))
    offsets = ensemble.frequencies_hz - nu0
    delays = _skew_delays_ps(cfg) * 1e-12
    total = (phases[:, None, None]
             + 2.0 * math.pi * delays[None, :, None] * offsets[None, None, :])
    stokes = np.zeros((len(ensemble), 4))
    stokes[:, 0] = 1.0
    stokes[:, 2] = np.cos(total).mean(axis=(0, 1))
    stokes[:, 3] = np.sin(total).mean(axis=(0, 1))
    return stokes


def _check_state(state: Bb84State, cfg: EncoderConfig) -> Bb84State:
    state = Bb84State(state)
    if state not in cfg.basis_set.states:
        raise InvalidStateError(
            f"state {state} is not prepared by basis set {cfg.basis_set}",
            quantity="state")
    return state


def prepare_slices(state: Bb84State, ensemble: SliceEnsemble,
                   cfg: EncoderConfig) -> SliceEnsemble:
    """Imprint a BB84 state on every slice of a broadband ensemble.

    Args:
        state: State to prepare; must belong to ``cfg.basis_set``.
        ensemble: Sliced source spectrum.
        cfg: Encoder configuration.

    Returns:
        The ensemble with prepared slice states; weights and μ unchanged.

    Raises:
        InvalidStateError: If the state is outside the basis set.
    """
    state = _check_state(state, cfg)
    if cfg.architecture is Architecture.FOUR_MODULATOR:
        stokes = np.zeros((len(ensemble), 4))
        stokes[:, 0] = 1.0
        stokes[:, 1:] = state.axis
    else:
        stokes = _iq_stokes([state_phase(state)], ensemble, cfg)
    stokes[:, 1:] *= cfg.visibility
    return ensemble.with_stokes(stokes)


def prepare_transition(previous: Bb84State, state: Bb84State,
                       ensemble: SliceEnsemble, cfg: EncoderConfig,
                       rate_hz: float) -> SliceEnsemble:
    """Prepare a symbol whose phase drive is still settling.

    With a finite drive bandwidth the phase relaxes exponentially from the
    previous symbol's phase; the emitted slices carry the average state over
    the carved emission window. Without a drive limit, or for the
    four-modulator architecture, this equals ``prepare_slices``.
    """
    if (cfg.drive_bandwidth_hz is None
            or cfg.architecture is Architecture.FOUR_MODULATOR):
        return prepare_slices(state, ensemble, cfg)
    previous = _check_state(previous, cfg)
    state = _check_state(state, cfg)
    period = 1.0 / rate_hz
    tau_c = 1.0 / (2.0 * math.pi * cfg.drive_bandwidth_hz)
    fractions = (np.arange(DRIVE_QUADRATURE_POINTS) + 0.5) / DRIVE_QUADRATURE_POINTS
    t = period * (0.5 * (1.0 - cfg.carve_duty) + cfg.carve_duty * fractions)
    start, end = state_phase(previous), state_phase(state)
    phases = end + (start - end) * np.exp(-t / tau_c)
    stokes = _iq_stokes(phases, ensemble, cfg)
    stokes[:, 1:] *= cfg.visibility
    return ensemble.with_stokes(stokes)


@dataclass(frozen=True)
class CarvingGate:
    """Emission window of a return-to-zero carved pulse train.

    Attributes:
        rate_hz: Symbol rate.
        duty: Emitting fraction of each symbol period, centered.
    """

    rate_hz: float
    duty: float

    @property
    def window_s(self) -> float:
        """Duration of the emission window."""
        return self.duty / self.rate_hz

    @property
    def continuous(self) -> bool:
        return self.duty >= 1.0

    def window(self, symbol_index: int) -> tuple[float, float]:
        """Start and end time of the emission window of one symbol."""
        center = (symbol_index + 0.5) / self.rate_hz
        half = 0.5 * self.window_s
        return center - half, center + half

    def emission_times(self, symbol_indices: ArrayLike,
                       rng: np.random.Generator) -> NDArray[np.float64]:
        """Uniform emission instants inside each symbol's window."""
        idx = np.asarray(symbol_indices, dtype=float)
        offsets = rng.uniform(-0.5, 0.5, size=idx.shape) * self.window_s
        return (idx + 0.5) / self.rate_hz + offsets

    def photon_arrivals(self, n_symbols: int, mu: float,
                        rng: np.random.Generator
                        ) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Poisson photons of ``n_symbols`` symbols and their emission times.

        Photon numbers are drawn before times, so carving concentrates the
        light without changing how many photons are sent.
        """
        counts = rng.poisson(mu, size=n_symbols)
        indices = np.repeat(np.arange(n_symbols), counts)
        return indices, self.emission_times(indices, rng)


def carve(frame: SymbolFrame, duty: float) -> CarvingGate:
    """Describe the emission gate of a carved frame.

    Raises:
        ScenarioConfigError: If ``duty`` is outside (0, 1].
    """
    if not 0.0 < duty <= 1.0:
        raise ScenarioConfigError([f"encoder.carve_duty: must be in (0, 1], got {duty}"])
    return CarvingGate(frame.rate_hz, float(duty))


def frame_states(frame: SymbolFrame, basis_set: BasisSet) -> list[Bb84State]:
    """Prepared state of every symbol of a frame."""
    states = BasisSet(basis_set).states
    return [states[i] for i in frame.state_indices()]
