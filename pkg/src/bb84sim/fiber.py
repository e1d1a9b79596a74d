"""Fiber propagation through concatenated random waveplates.

The fiber is a chain of birefringent segments. Each segment rotates the
polarized part about its own axis by a retardance that varies linearly with
optical frequency; the slope is the segment's differential group delay.
Slices of a broadband ensemble therefore leave the fiber with different
states, and their incoherent sum loses degree of polarization.

Slow environmental drift is a Gaussian random walk of the segment axes and
retardances. Deployed spans (parking lot, rooftop) are ordinary segments
with a larger drift rate.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Final

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .polarization import PoincareRotation, StokesVector, rotation_matrices
from .source import SliceEnsemble, optical_frequency_hz

logger = logging.getLogger(__name__)

DEFAULT_PMD_PS_SQRTKM: Final[float] = 0.05
DEFAULT_ATTEN_DB_PER_KM: Final[float] = 0.2
DEFAULT_REF_LAMBDA_NM: Final[float] = 1550.0
MIN_SEGMENTS: Final[int] = 16

DRIFT_STREAM_KEY: Final[int] = 0xD81F


@dataclass(frozen=True, eq=False)
class FiberModel:
    """Birefringent fiber as segments with frequency-dependent retardance.

    Attributes:
        length_km: Total length.
        atten_db_per_km: Mean attenuation over the whole length.
        axes: Segment birefringence axes, shape (n, 3), unit rows.
        retardance_ref: Segment retardance at ``ref_lambda_nm`` (rad).
        dgd_ps: Segment differential group delay (ps).
        segment_drift: Random-walk scale of every segment (rad/√hour).
        ref_lambda_nm: Wavelength anchoring the retardances.
        drift_rate: Random-walk scale of the main spool (rad/√hour).
        seed: Seed the segments were drawn from.
    """

    length_km: float
    atten_db_per_km: float
    axes: NDArray[np.float64]
    retardance_ref: NDArray[np.float64]
    dgd_ps: NDArray[np.float64]
    segment_drift: NDArray[np.float64]
    ref_lambda_nm: float = DEFAULT_REF_LAMBDA_NM
    drift_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("axes", "retardance_ref", "dgd_ps", "segment_drift"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n_segments(self) -> int:
        return len(self.dgd_ps)

    @property
    def loss_db(self) -> float:
        """Total attenuation."""
        return self.atten_db_per_km * self.length_km

    @property
    def transmittance(self) -> float:
        """Power transmission 10^(−α·L/10)."""
        return 10.0 ** (-self.loss_db / 10.0)

    @property
    def total_dgd_ps(self) -> float:
        """Root-sum-square of the segment delays (mean-square total DGD)."""
        return float(np.sqrt(np.sum(self.dgd_ps ** 2)))

    def segment_angles(self, lambda_nm: ArrayLike) -> NDArray[np.float64]:
        """Retardance of every segment at every wavelength, shape (m, n)."""
        nu = np.atleast_1d(optical_frequency_hz(lambda_nm))
        nu_ref = float(optical_frequency_hz(self.ref_lambda_nm))
        return (self.retardance_ref[None, :]
                + 2.0 * math.pi * self.dgd_ps[None, :] * 1e-12
                * (nu[:, None] - nu_ref))

    def rotation_at(self, lambda_nm: float) -> PoincareRotation:
        """Overall rotation and loss seen by one wavelength."""
        matrix = _chain_matrices(self, np.array([lambda_nm]))[0]
        return PoincareRotation(matrix, self.transmittance)


def _chain_matrices(fiber: FiberModel, lambdas_nm: NDArray[np.float64]
                    ) -> NDArray[np.float64]:
    """Product of all segment rotations per wavelength, shape (m, 3, 3)."""
    total = np.broadcast_to(np.eye(3), (len(lambdas_nm), 3, 3)).copy()
    if fiber.n_segments == 0:
        return total
    angles = fiber.segment_angles(lambdas_nm)
    for k in range(fiber.n_segments):
        axes = np.broadcast_to(fiber.axes[k], (len(lambdas_nm), 3))
        total = rotation_matrices(axes, angles[:, k]) @ total
    return total


def default_segment_count(length_km: float) -> int:
    """max(16, ceil(length_km))."""
    return max(MIN_SEGMENTS, math.ceil(length_km))


def build_fiber(length_km: float,
                pmd_coeff_ps_sqrtkm: float = DEFAULT_PMD_PS_SQRTKM,
                n_segments: int | None = None,
                atten_db_per_km: float = DEFAULT_ATTEN_DB_PER_KM,
                drift_rate: float = 0.0,
                seed: int = 0,
                *,
                ref_lambda_nm: float = DEFAULT_REF_LAMBDA_NM) -> FiberModel:
    """Draw a random-waveplate fiber.

    Segment axes are uniform on the sphere and reference retardances uniform
    in [0, 2π). Segment delays are random but rescaled so that their
    root-sum-square equals ``pmd_coeff·√length``. The same seed and segment
    count produce the same draws at every length, so a length sweep scales
    one fiber instead of drawing unrelated ones.

    A zero-length fiber is the identity channel.
    """
    n = default_segment_count(length_km) if n_segments is None else int(n_segments)
    if n < 1:
        raise ValueError(f"n_segments must be >= 1, got {n}")
    if pmd_coeff_ps_sqrtkm < 0.0:
        raise ValueError("pmd_coeff_ps_sqrtkm must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    raw_axes = rng.normal(size=(n, 3))
    axes = raw_axes / np.linalg.norm(raw_axes, axis=1, keepdims=True)
    retardance = rng.uniform(0.0, 2.0 * math.pi, size=n)
    raw_dgd = np.abs(rng.normal(size=n)) + 1e-12
    target = pmd_coeff_ps_sqrtkm * math.sqrt(max(length_km, 0.0))
    dgd = raw_dgd * (target / float(np.sqrt(np.sum(raw_dgd ** 2))))
    if length_km <= 0.0:
        retardance = np.zeros(n)
        dgd = np.zeros(n)
    return FiberModel(length_km=float(length_km),
                      atten_db_per_km=float(atten_db_per_km),
                      axes=axes, retardance_ref=retardance, dgd_ps=dgd,
                      segment_drift=np.full(n, float(drift_rate)),
                      ref_lambda_nm=float(ref_lambda_nm),
                      drift_rate=float(drift_rate), seed=int(seed))


def concatenate(fibers: Sequence[FiberModel]) -> FiberModel:
    """Chain fibers in order; the first one sets the reference fields."""
    if not fibers:
        raise ValueError("need at least one fiber")
    first = fibers[0]
    length = sum(f.length_km for f in fibers)
    loss = sum(f.loss_db for f in fibers)
    ref_nu = float(optical_frequency_hz(first.ref_lambda_nm))
    retardances = []
    for f in fibers:
        # re-anchor every segment's retardance to the first fiber's wavelength
        shift = 2.0 * math.pi * f.dgd_ps * 1e-12 * (
            ref_nu - float(optical_frequency_hz(f.ref_lambda_nm)))
        retardances.append(f.retardance_ref + shift)
    return FiberModel(
        length_km=length,
        atten_db_per_km=(loss / length) if length > 0 else first.atten_db_per_km,
        axes=np.concatenate([f.axes for f in fibers]),
        retardance_ref=np.concatenate(retardances),
        dgd_ps=np.concatenate([f.dgd_ps for f in fibers]),
        segment_drift=np.concatenate([f.segment_drift for f in fibers]),
        ref_lambda_nm=first.ref_lambda_nm, drift_rate=first.drift_rate,
        seed=first.seed)


def propagate_stokes(stokes: ArrayLike, lambdas_nm: ArrayLike,
                     fiber: FiberModel) -> NDArray[np.float64]:
    """Rotate per-wavelength Stokes rows through the fiber (no loss)."""
    stokes = np.array(stokes, dtype=float, ndmin=2)
    matrices = _chain_matrices(fiber, np.atleast_1d(np.asarray(lambdas_nm, dtype=float)))
    out = stokes.copy()
    out[:, 1:] = np.einsum("mij,mj->mi", matrices, stokes[:, 1:])
    return out


def propagate(ensemble: SliceEnsemble, fiber: FiberModel,
              at_time: float = 0.0) -> SliceEnsemble:
    """Send an ensemble through the fiber.

    Each slice is rotated by the fiber at its own wavelength, so per-slice
    DOP is preserved while the ensemble DOP generally drops. μ is attenuated
    by 10^(−α·L/10).

    Args:
        ensemble: Prepared slice ensemble.
        fiber: Fiber model at time zero.
        at_time: Hours of drift applied before propagating, as one
            random-walk step drawn from the fiber's own drift stream.
            Zero uses the fiber as given.

    Raises:
        ValueError: If ``at_time`` is negative.
    """
    if at_time < 0.0:
        raise ValueError(f"at_time must be >= 0, got {at_time}")
    if at_time > 0.0:
        fiber = drift_step(fiber, at_time, drift_rng(fiber))
    stokes = propagate_stokes(ensemble.stokes, ensemble.lambdas_nm, fiber)
    return SliceEnsemble(ensemble.lambdas_nm, ensemble.weights, stokes,
                         ensemble.mu * fiber.transmittance, ensemble.center_nm)


def drift_step(fiber: FiberModel, dt_hours: float,
               rng: np.random.Generator) -> FiberModel:
    """Evolve the fiber by one random-walk step; the input is unchanged.

    Every segment's axis and retardance receive Gaussian kicks of scale
    ``drift·√dt``.
    """
    if dt_hours <= 0.0:
        raise ValueError(f"dt_hours must be > 0, got {dt_hours}")
    scale = fiber.segment_drift * math.sqrt(dt_hours)
    if not np.any(scale > 0.0):
        return fiber
    n = fiber.n_segments
    axes = fiber.axes + rng.normal(size=(n, 3)) * scale[:, None]
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    retardance = fiber.retardance_ref + rng.normal(size=n) * scale
    return FiberModel(length_km=fiber.length_km,
                      atten_db_per_km=fiber.atten_db_per_km, axes=axes,
                      retardance_ref=retardance, dgd_ps=fiber.dgd_ps,
                      segment_drift=fiber.segment_drift,
                      ref_lambda_nm=fiber.ref_lambda_nm,
                      drift_rate=fiber.drift_rate, seed=fiber.seed)


def drift_rng(fiber: FiberModel) -> np.random.Generator:
    """Default drift stream derived from the fiber seed."""
    return np.random.default_rng(
        np.random.SeedSequence([fiber.seed, DRIFT_STREAM_KEY]))


def trajectory(fiber: FiberModel, probe_lambdas: Sequence[float],
               duration_hours: float, step_hours: float,
               input_state: StokesVector,
               rng: np.random.Generator | None = None
               ) -> list[tuple[float, float, float, float, float]]:
    """Sample the output polarization of narrow probes over time.

    Args:
        fiber: Fiber at time zero.
        probe_lambdas: Probe wavelengths in nm.
        duration_hours: Total observation time; zero gives one sample.
        step_hours: Time between samples.
        input_state: Launched state, identical for every probe.
        rng: Drift stream; defaults to one derived from the fiber seed.

    Returns:
        ``(time_hours, lambda_nm, s1, s2, s3)`` rows with the polarized
        part normalized by ``s0``, ordered by time then wavelength.
    """
    if step_hours <= 0.0:
        raise ValueError(f"step_hours must be > 0, got {step_hours}")
    rng = drift_rng(fiber) if rng is None else rng
    lambdas = np.asarray(probe_lambdas, dtype=float)
    launched = np.tile(input_state.as_array(), (len(lambdas), 1))
    n_steps = int(math.floor(duration_hours / step_hours + 1e-9))
    rows: list[tuple[float, float, float, float, float]] = []
    current = fiber
    for step in range(n_steps + 1):
        if step > 0:
            current = drift_step(current, step_hours, rng)
        out = propagate_stokes(launched, lambdas, current)
        t = step * step_hours
        for lam, s in zip(lambdas, out):
            s0 = s[0] if s[0] > 0 else 1.0
            rows.append((t, float(lam), s[1] / s0, s[2] / s0, s[3] / s0))
    logger.debug("trajectory: %d samples for %d probe(s)", len(rows), len(lambdas))
    return rows
