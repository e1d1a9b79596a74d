"""BB84 post-processing: windowing, frame synchronization, sifting and QBER.

The pipeline turns detector tags into a ``QberReport``::

    windowed = temporal_filter(tags, rate_hz, window_fraction, offset_s)
    records = records_from_tags(windowed, basis_switch_symbol)
    shift = frame_synchronize(records, frame)
    key = sift(frame, records, shift)
    report = compute_qber(key, duration_s)

Bob's received symbol ``i`` corresponds to Alice's frame position
``(i + shift) mod F``. Detector channel 0 sits on the pass arm and reads
bit 0, channel 1 reads bit 1.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cache
from typing import Final

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, special

from .encoder import SymbolFrame
from .exceptions import EmptyEnsembleError, SyncFailureError
from .flags import DISCARD_DOUBLE_CLICKS, AssignRandomBitFlag, DoubleClickPolicy
from .receiver import TagStream, TimeTag

logger = logging.getLogger(__name__)

SYNC_SIGMA: Final[float] = 5.0
MIN_OFF_PEAK_SCORES: Final[int] = 8


@dataclass(frozen=True)
class DetectionRecord:
    """One accepted click mapped to a received symbol."""

    symbol_index: int
    bob_basis_index: int
    bob_bit: int
    channel: int


@dataclass(frozen=True, eq=False)
class RecordSet:
    """Detection records as parallel arrays, ordered by symbol index."""

    symbol_index: NDArray[np.int64]
    bob_basis_index: NDArray[np.uint8]
    bob_bit: NDArray[np.uint8]
    channel: NDArray[np.int8]

    def __post_init__(self) -> None:
        arrays = [np.asarray(self.symbol_index, dtype=np.int64).reshape(-1),
                  np.asarray(self.bob_basis_index, dtype=np.uint8).reshape(-1),
                  np.asarray(self.bob_bit, dtype=np.uint8).reshape(-1),
                  np.asarray(self.channel, dtype=np.int8).reshape(-1)]
        if len({len(a) for a in arrays}) != 1:
            raise ValueError("record arrays must have equal length")
        order = np.lexsort((arrays[3], arrays[0]))
        for name, values in zip(("symbol_index", "bob_basis_index", "bob_bit", "channel"),
                                arrays):
            values = values[order]
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    @classmethod
    def from_records(cls, records: Sequence[DetectionRecord]) -> RecordSet:
        return cls(np.array([r.symbol_index for r in records], dtype=np.int64),
                   np.array([r.bob_basis_index for r in records], dtype=np.uint8),
                   np.array([r.bob_bit for r in records], dtype=np.uint8),
                   np.array([r.channel for r in records], dtype=np.int8))

    def __len__(self) -> int:
        return len(self.symbol_index)

    def to_records(self) -> list[DetectionRecord]:
        return [DetectionRecord(*row) for row in zip(
            self.symbol_index.tolist(), self.bob_basis_index.tolist(),
            self.bob_bit.tolist(), self.channel.tolist())]

    def subset(self, mask: NDArray[np.bool_]) -> RecordSet:
        return RecordSet(self.symbol_index[mask], self.bob_basis_index[mask],
                         self.bob_bit[mask], self.channel[mask])


@dataclass(frozen=True, eq=False)
class WindowedTags:
    """Tags that survived temporal filtering, with their symbol index."""

    symbol_index: NDArray[np.int64]
    channel: NDArray[np.int8]
    t_s: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.symbol_index)


def _as_stream(tags: TagStream | Sequence[TimeTag]) -> TagStream:
    return tags if isinstance(tags, TagStream) else TagStream.from_tags(tags)


def temporal_filter(tags: TagStream | Sequence[TimeTag], rate_hz: float,
                    window_fraction: float, offset_s: float = 0.0) -> WindowedTags:
    """Keep tags inside a centered window of each symbol period.

    Args:
        tags: Detector tags.
        rate_hz: Symbol rate.
        window_fraction: Accepted fraction of the period, in (0, 1].
        offset_s: Time of the start of received symbol zero.

    Returns:
        The accepted tags with ``symbol_index = floor((t - offset)·rate)``.

    Raises:
        ValueError: If ``window_fraction`` is outside (0, 1].
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"window_fraction must be in (0, 1], got {window_fraction}")
    stream = _as_stream(tags)
    position = (stream.t_s - offset_s) * rate_hz
    symbol = np.floor(position)
    phase = position - symbol
    keep = np.abs(phase - 0.5) <= 0.5 * window_fraction
    return WindowedTags(symbol[keep].astype(np.int64), stream.channel[keep],
                        stream.t_s[keep])


def records_from_tags(windowed: WindowedTags,
                      basis_switch_symbol: int | None = None) -> RecordSet:
    """Attach Bob's basis and bit to windowed tags.

    Bob measures basis 0 before ``basis_switch_symbol`` and basis 1 from
    it on; ``None`` means the whole stream is basis 0. The channel gives
    the bit.
    """
    if basis_switch_symbol is None:
        basis = np.zeros(len(windowed), dtype=np.uint8)
    else:
        basis = (windowed.symbol_index >= basis_switch_symbol).astype(np.uint8)
    return RecordSet(windowed.symbol_index, basis,
                     windowed.channel.astype(np.uint8), windowed.channel)


def _as_records(records: RecordSet | Sequence[DetectionRecord]) -> RecordSet:
    return records if isinstance(records, RecordSet) else RecordSet.from_records(records)


def correlation_scores(records: RecordSet | Sequence[DetectionRecord],
                       frame: SymbolFrame) -> NDArray[np.float64]:
    """Matches minus mismatches at matching bases for every cyclic shift.

    Computed as a circular cross-correlation with FFTs.
    """
    records = _as_records(records)
    n = len(frame)
    position = np.mod(records.symbol_index, n)
    sign = 1.0 - 2.0 * records.bob_bit.astype(float)
    alice_sign = 1.0 - 2.0 * frame.bits.astype(float)
    scores = np.zeros(n)
    for basis in (0, 1):
        mine = records.bob_basis_index == basis
        x = np.bincount(position[mine], weights=sign[mine], minlength=n)
        y = np.where(frame.basis == basis, alice_sign, 0.0)
        scores += np.fft.irfft(np.conj(np.fft.rfft(x)) * np.fft.rfft(y), n=n)
    return np.rint(scores)


def frame_synchronize(records: RecordSet | Sequence[DetectionRecord],
                      frame: SymbolFrame, max_shift: int | None = None) -> int:
    """Find the cyclic shift aligning Bob's records with Alice's frame.

    The best shift is accepted only if its score exceeds the mean of the
    other candidate scores by five standard deviations.

    Args:
        records: Detection records.
        frame: Alice's frame.
        max_shift: Largest shift considered; ``None`` searches the whole
            frame.

    Raises:
        SyncFailureError: If there are no records or no significant peak.
    """
    records = _as_records(records)
    if len(records) == 0:
        raise SyncFailureError(peak_score=0.0, threshold=0.0, n_records=0)
    scores = correlation_scores(records, frame)
    if max_shift is not None:
        scores = scores[:max(1, min(len(scores), int(max_shift) + 1))]
    best = int(np.argmax(scores))
    peak = float(scores[best])
    off_peak = np.delete(scores, best)
    if len(off_peak) < MIN_OFF_PEAK_SCORES:
        threshold = float(np.max(off_peak, initial=0.0))
    else:
        threshold = float(off_peak.mean() + SYNC_SIGMA * off_peak.std())
    if not peak > threshold:
        raise SyncFailureError(peak_score=peak, threshold=threshold,
                               n_records=len(records))
    logger.debug("frame sync: shift %d, peak %.0f over threshold %.1f",
                 best, peak, threshold)
    return best


@dataclass(frozen=True, eq=False)
class SiftedKey:
    """Sifted bit pairs with their provenance.

    Attributes:
        alice_bits: Alice's bits at the kept symbols.
        bob_bits: Bob's bits at the kept symbols.
        symbol_index: Received symbol index of each pair, ascending.
        basis_index: Shared basis of each pair.
        channel: Detector that produced each pair.
        double_clicks: Symbols with clicks on both detectors.
        n_records: Records offered to sifting.
    """

    alice_bits: NDArray[np.uint8]
    bob_bits: NDArray[np.uint8]
    symbol_index: NDArray[np.int64]
    basis_index: NDArray[np.uint8]
    channel: NDArray[np.int8]
    double_clicks: int = 0
    n_records: int = 0

    def __len__(self) -> int:
        return len(self.alice_bits)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """The key as ``(alice_bit, bob_bit)`` pairs."""
        return list(zip(self.alice_bits.tolist(), self.bob_bits.tolist()))

    @property
    def errors(self) -> NDArray[np.bool_]:
        return self.alice_bits != self.bob_bits


def sift(frame: SymbolFrame, records: RecordSet | Sequence[DetectionRecord],
         shift: int, *, policy: DoubleClickPolicy = DISCARD_DOUBLE_CLICKS,
         rng: np.random.Generator | None = None) -> SiftedKey:
    """Keep records measured in Alice's basis at the shifted frame position.

    Args:
        frame: Alice's frame.
        records: Detection records.
        shift: Alignment from ``frame_synchronize``.
        policy: Handling of symbols with clicks on both detectors.
        rng: Random source for the random-bit policy.

    Returns:
        The sifted key; double clicks are counted whether or not they are
        kept.
    """
    records = _as_records(records)
    symbols = records.symbol_index
    first = np.ones(len(records), dtype=bool)
    first[1:] = symbols[1:] != symbols[:-1]
    group = np.cumsum(first) - 1
    sizes = np.bincount(group, minlength=int(group[-1]) + 1 if len(group) else 0)
    multiple = sizes[group] > 1 if len(group) else np.zeros(0, dtype=bool)
    n_double = int(np.count_nonzero(first & multiple))

    bob_bits = records.bob_bit.copy()
    if isinstance(policy, AssignRandomBitFlag):
        keep = first
        if n_double:
            rng = rng if rng is not None else np.random.default_rng(0)
            bob_bits[first & multiple] = rng.integers(0, 2, size=n_double)
    else:
        keep = ~multiple
    records = RecordSet(symbols[keep], records.bob_basis_index[keep],
                        bob_bits[keep], records.channel[keep])

    position = np.mod(records.symbol_index + int(shift), len(frame))
    matched = frame.basis[position] == records.bob_basis_index
    return SiftedKey(alice_bits=frame.bits[position[matched]],
                     bob_bits=records.bob_bit[matched],
                     symbol_index=records.symbol_index[matched],
                     basis_index=records.bob_basis_index[matched],
                     channel=records.channel[matched],
                     double_clicks=n_double,
                     n_records=len(symbols))


@dataclass(frozen=True)
class Breakdown:
    """Counts and rates of one detector, one basis or one pairing of both."""

    sifted_count: int
    error_count: int
    qber: float
    qber_3sigma: float
    raw_key_bps: float


@dataclass(frozen=True)
class QberReport:
    """Quantum bit error ratio and raw key of one acquisition pair.

    Attributes:
        qber: Mismatch fraction of the sifted key.
        qber_3sigma: Three standard deviations of ``qber``.
        raw_key_bps: Sifted bits per second over the whole duration.
        sifted_count: Length of the sifted key.
        error_count: Mismatched bits.
        duration_s: Total measurement time.
        double_clicks: Symbols with clicks on both detectors.
        per_channel: Breakdown by detector.
        per_basis: Breakdown by basis; rates use each basis' own
            acquisition time.
        per_detector_basis: Breakdown keyed ``(basis, channel)``.
        sync_ok: False if synchronization fell back to the transmitted
            alignment.
        shift: Frame alignment used for sifting.
    """

    qber: float
    qber_3sigma: float
    raw_key_bps: float
    sifted_count: int
    error_count: int
    duration_s: float
    double_clicks: int = 0
    per_channel: dict[int, Breakdown] = field(default_factory=dict)
    per_basis: dict[int, Breakdown] = field(default_factory=dict)
    per_detector_basis: dict[tuple[int, int], Breakdown] = field(default_factory=dict)
    sync_ok: bool = True
    shift: int = 0

    def full_receiver_raw_key_bps(self) -> float:
        """Raw key of a four-detector receiver measuring both bases at once.

        Extrapolated as four times the mean single-detector, single-basis
        rate. Never folded into ``raw_key_bps``.
        """
        if not self.per_detector_basis:
            return 0.0
        rates = [b.raw_key_bps for b in self.per_detector_basis.values()]
        return 4.0 * float(np.mean(rates))

    def as_row(self) -> dict[str, float | int | bool]:
        """Flat summary used for CSV rows."""
        return dict(qber=self.qber, qber_3sigma=self.qber_3sigma,
                    raw_key_bps=self.raw_key_bps, sifted_count=self.sifted_count,
                    error_count=self.error_count, duration_s=self.duration_s,
                    double_clicks=self.double_clicks, sync_ok=self.sync_ok,
                    shift=self.shift)

    def summary(self) -> str:
        """Human-readable block for standard output."""
        lines = [f"QBER            {100 * self.qber:.2f} % "
                 f"(3σ = {100 * self.qber_3sigma:.2f} %)",
                 f"raw key         {self.raw_key_bps:.1f} b/s",
                 f"sifted / errors {self.sifted_count} / {self.error_count}",
                 f"double clicks   {self.double_clicks}",
                 f"duration        {self.duration_s:.6g} s"]
        for basis, b in sorted(self.per_basis.items()):
            lines.append(f"basis {basis}         QBER {100 * b.qber:.2f} %, "
                         f"raw key {b.raw_key_bps:.1f} b/s")
        for channel, b in sorted(self.per_channel.items()):
            lines.append(f"detector {channel}      QBER {100 * b.qber:.2f} %, "
                         f"sifted {b.sifted_count}")
        if self.per_detector_basis:
            lines.append(f"4-detector raw key (extrapolated) "
                         f"{self.full_receiver_raw_key_bps():.1f} b/s")
        if not self.sync_ok:
            lines.append("frame sync      FAILED (transmitted alignment used)")
        return "\n".join(lines)


def binomial_3sigma(errors: int, count: int) -> float:
    """Three binomial standard deviations of an error fraction."""
    if count == 0:
        return 0.0
    q = errors / count
    return 3.0 * math.sqrt(q * (1.0 - q) / count)


def _breakdown(errors: NDArray[np.bool_], duration_s: float) -> Breakdown:
    count = len(errors)
    n_err = int(np.count_nonzero(errors))
    return Breakdown(sifted_count=count, error_count=n_err,
                     qber=n_err / count if count else 0.0,
                     qber_3sigma=binomial_3sigma(n_err, count),
                     raw_key_bps=count / duration_s if duration_s > 0 else 0.0)


def compute_qber(key: SiftedKey, duration_s: float, *, n_batches: int = 0,
                 basis_durations_s: tuple[float, float] | None = None,
                 sync_ok: bool = True, shift: int = 0) -> QberReport:
    """Summarize a sifted key.

    Args:
        key: Output of ``sift``.
        duration_s: Total measurement time.
        n_batches: When two or more, the key is split into consecutive
            batches and three standard deviations of the batch QBERs are
            added in quadrature to the binomial term.
        basis_durations_s: Acquisition time of each basis; defaults to
            half the duration each.
        sync_ok: Recorded in the report.
        shift: Recorded in the report.

    Raises:
        EmptyEnsembleError: If the sifted key is empty.
    """
    count = len(key)
    if count == 0:
        raise EmptyEnsembleError("sifted key")
    errors = key.errors
    n_err = int(np.count_nonzero(errors))
    qber = n_err / count
    sigma3 = binomial_3sigma(n_err, count)
    if n_batches >= 2 and count >= n_batches:
        batch_qbers = [float(np.mean(b)) for b in np.array_split(errors, n_batches)]
        sigma3 = math.hypot(sigma3, 3.0 * float(np.std(batch_qbers, ddof=1)))

    if basis_durations_s is None:
        basis_durations_s = (0.5 * duration_s, 0.5 * duration_s)
    per_channel = {c: _breakdown(errors[key.channel == c], duration_s) for c in (0, 1)}
    per_basis = {b: _breakdown(errors[key.basis_index == b], basis_durations_s[b])
                 for b in (0, 1)}
    per_detector_basis = {
        (b, c): _breakdown(errors[(key.basis_index == b) & (key.channel == c)],
                           basis_durations_s[b])
        for b in (0, 1) for c in (0, 1)}
    return QberReport(qber=qber, qber_3sigma=sigma3,
                      raw_key_bps=count / duration_s,
                      sifted_count=count, error_count=n_err,
                      duration_s=float(duration_s),
                      double_clicks=key.double_clicks,
                      per_channel=per_channel, per_basis=per_basis,
                      per_detector_basis=per_detector_basis,
                      sync_ok=sync_ok, shift=int(shift))


def binary_entropy(q: float | ArrayLike) -> float | NDArray[np.float64]:
    """Shannon entropy of a biased bit, in bits; ``h(0) = h(1) = 0``.

    >>> round(binary_entropy(0.11), 5)
    0.49992
    """
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr < 0.0) | (q_arr > 1.0)):
        raise ValueError("q must lie in [0, 1]")
    h = (special.entr(q_arr) + special.entr(1.0 - q_arr)) / math.log(2.0)
    return float(h) if h.ndim == 0 else h


def secure_fraction(q: float) -> float:
    """Asymptotic BB84 secret fraction ``max(0, 1 - 2·h(q))``."""
    return max(0.0, 1.0 - 2.0 * float(binary_entropy(q)))


@cache
def qber_threshold() -> float:
    """QBER at which the asymptotic secret fraction reaches zero (~11 %)."""
    return float(optimize.bisect(lambda q: 1.0 - 2.0 * float(binary_entropy(q)),
                                 1e-6, 0.25, xtol=1e-12))


def evaluate_tags(frame: SymbolFrame, tags: TagStream | Sequence[TimeTag], *,
                  window_fraction: float, duration_s: float,
                  offset_s: float = 0.0,
                  basis_switch_symbol: int | None = None,
                  policy: DoubleClickPolicy = DISCARD_DOUBLE_CLICKS,
                  n_batches: int = 0, max_shift: int | None = None,
                  rng: np.random.Generator | None = None) -> QberReport:
    """Run the complete post-processing chain on recorded tags.

    Raises:
        SyncFailureError: If no significant correlation peak is found.
        EmptyEnsembleError: If no bit survives sifting.
    """
    windowed = temporal_filter(tags, frame.rate_hz, window_fraction, offset_s)
    records = records_from_tags(windowed, basis_switch_symbol)
    shift = frame_synchronize(records, frame, max_shift)
    key = sift(frame, records, shift, policy=policy, rng=rng)
    if basis_switch_symbol is None:
        basis_durations = (duration_s, 0.0)
    else:
        first = min(duration_s, basis_switch_symbol / frame.rate_hz)
        basis_durations = (first, duration_s - first)
    return compute_qber(key, duration_s, n_batches=n_batches,
                        basis_durations_s=basis_durations, shift=shift)
