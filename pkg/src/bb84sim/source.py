"""Incoherent broadband source: spectra, spectral slicing and photon budget.

A broadband emitter is represented as a ``SliceEnsemble``: narrow spectral
slices, each carrying a weight (its share of the total power) and its own
Stokes vector. Slices add incoherently, so polarization calculus stays in
Stokes space.

The photon-budget helpers convert a mean photon number per symbol into a
launch power in dBm and compare it with the available source power.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Any, Final

import numpy as np
import pandas as pd
from mixinforge import sort_dict_by_keys
from numpy.typing import ArrayLike, NDArray
from scipy import constants, stats
from scipy.integrate import trapezoid

from .exceptions import (EmptyEnsembleError, InvalidStateError,
                         ResultIOError, ScenarioConfigError)
from .parameters import ConfigObject
from .polarization import StokesVector

logger = logging.getLogger(__name__)

GAUSSIAN_TRUNCATION_FWHM: Final[float] = 3.0
"""Gaussian spectra are cut at ±3·FWHM before slicing."""

GEONSI_MAX_OUTPUT_DBM: Final[float] = -69.8
"""Maximum output power of the Ge-on-Si emitter (105 pW)."""

_FWHM_TO_SIGMA: Final[float] = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_BIN_QUADRATURE_POINTS: Final[int] = 17


class SpectrumShape(StrEnum):
    """Supported spectral density shapes."""

    RECTANGULAR = "rectangular"
    GAUSSIAN = "gaussian"
    TABULATED = "tabulated"


class SourceSpectrum(ConfigObject):
    """Power spectral density of the emitter after optional filtering.

    Attributes:
        shape: Density shape.
        center_nm: Center wavelength (nm).
        width_nm: Full width for rectangular spectra, FWHM for Gaussian ones;
            ignored for tabulated spectra.
        table: ``(wavelength_nm, relative_density)`` pairs for tabulated
            spectra, sorted by wavelength.
    """

    def __init__(self,
                 *,
                 shape: SpectrumShape | str = SpectrumShape.RECTANGULAR,
                 center_nm: float = 1578.0,
                 width_nm: float = 1.0,
                 table: Sequence[tuple[float, float]] | None = None):
        """Validate and store the spectrum description.

        Raises:
            ScenarioConfigError: If the width is non-positive, or a tabulated
                spectrum has fewer than two points or negative densities.
        """
        self.shape = SpectrumShape(shape)
        self.center_nm = float(center_nm)
        self.width_nm = float(width_nm)
        self.table = (None if table is None else
                      tuple((float(lam), float(d)) for lam, d in sorted(table)))

        violations = []
        if self.shape is SpectrumShape.TABULATED:
            if self.table is None or len(self.table) < 2:
                violations.append("source.table: needs at least 2 points")
            elif any(d < 0.0 for _, d in self.table):
                violations.append("source.table: densities must be non-negative")
            elif sum(d for _, d in self.table) <= 0.0:
                violations.append("source.table: densities must not all be zero")
        elif not self.width_nm > 0.0:
            violations.append(f"source.width_nm: must be > 0, got {self.width_nm}")
        if not self.center_nm > 0.0:
            violations.append(f"source.center_nm: must be > 0, got {self.center_nm}")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        """Return the constructor parameters, sorted by name."""
        params = dict(shape=str(self.shape), center_nm=self.center_nm,
                      width_nm=self.width_nm,
                      table=None if self.table is None else list(self.table))
        return sort_dict_by_keys(params)

    def with_width(self, width_nm: float) -> SourceSpectrum:
        """Same shape and center with another width (filter bandwidth)."""
        return self.replace(width_nm=width_nm)

    def support_nm(self) -> tuple[float, float]:
        """Wavelength interval that is sliced."""
        if self.shape is SpectrumShape.RECTANGULAR:
            half = 0.5 * self.width_nm
        elif self.shape is SpectrumShape.GAUSSIAN:
            half = GAUSSIAN_TRUNCATION_FWHM * self.width_nm
        else:
            assert self.table is not None
            return self.table[0][0], self.table[-1][0]
        return self.center_nm - half, self.center_nm + half

    def bin_powers(self, edges_nm: NDArray[np.float64]) -> NDArray[np.float64]:
        """Integrated (unnormalized) density over consecutive bins."""
        if self.shape is SpectrumShape.RECTANGULAR:
            return np.diff(edges_nm)
        if self.shape is SpectrumShape.GAUSSIAN:
            sigma = self.width_nm * _FWHM_TO_SIGMA
            return np.diff(stats.norm.cdf(edges_nm, loc=self.center_nm,
                                          scale=sigma))
        assert self.table is not None
        table = np.asarray(self.table)
        powers = np.empty(len(edges_nm) - 1)
        for i, (lo, hi) in enumerate(zip(edges_nm[:-1], edges_nm[1:])):
            grid = np.linspace(lo, hi, _BIN_QUADRATURE_POINTS)
            powers[i] = trapezoid(np.interp(grid, table[:, 0], table[:, 1]), grid)
        return powers


SPECTRUM_PRESETS: Final[dict[str, dict[str, Any]]] = {
    "geonsi-unfiltered": dict(shape="gaussian", center_nm=1581.0, width_nm=20.0),
    "geonsi-filtered": dict(shape="rectangular", center_nm=1590.0, width_nm=14.0),
    "ase-filtered": dict(shape="rectangular", center_nm=1539.1, width_nm=0.2),
}


def spectrum_preset(name: str) -> SourceSpectrum:
    """Build one of the named spectra.

    Raises:
        ScenarioConfigError: If the preset name is unknown.
    """
    try:
        return SourceSpectrum(**SPECTRUM_PRESETS[name])
    except KeyError as exc:
        known = ", ".join(sorted(SPECTRUM_PRESETS))
        raise ScenarioConfigError(
            [f"source.preset: unknown preset {name!r} (known: {known})"]) from exc


def read_spectrum_csv(path: str | Path, *, center_nm: float | None = None
                      ) -> SourceSpectrum:
    """Load a tabulated spectrum from a two-column CSV with a header line.

    Args:
        path: CSV with columns ``wavelength_nm`` and ``relative_density``.
        center_nm: Reference wavelength; defaults to the density centroid.

    Raises:
        ResultIOError: If the file cannot be read.
        ScenarioConfigError: If the columns are missing or invalid.
    """
    try:
        frame = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ResultIOError(f"cannot read spectrum table {path}",
                            path=str(path), operation="read") from exc
    missing = {"wavelength_nm", "relative_density"} - set(frame.columns)
    if missing:
        raise ScenarioConfigError(
            [f"source.table_csv: missing column {name!r}" for name in sorted(missing)])
    table = list(zip(frame["wavelength_nm"].astype(float),
                     frame["relative_density"].astype(float)))
    if center_nm is None and len(table) >= 2:
        lam = frame["wavelength_nm"].to_numpy(float)
        dens = frame["relative_density"].to_numpy(float)
        total = dens.sum()
        center_nm = float((lam * dens).sum() / total) if total > 0 else float(lam.mean())
    return SourceSpectrum(shape=SpectrumShape.TABULATED,
                          center_nm=center_nm if center_nm is not None else 1.0,
                          table=table)


@dataclass(frozen=True)
class SpectralSlice:
    """One narrow spectral slice of a broadband ensemble.

    Attributes:
        lambda_nm: Slice wavelength.
        weight: Share of the total power in [0, 1].
        state: Normalized Stokes vector of the slice (``s0 == 1``).
    """

    lambda_nm: float
    weight: float
    state: StokesVector


@dataclass(frozen=True, eq=False)
class SliceEnsemble:
    """Broadband signal as an ordered set of incoherent spectral slices.

    Stored column-wise for vectorized propagation; ``slices`` yields the
    per-slice view.

    Attributes:
        lambdas_nm: Strictly increasing slice wavelengths, shape (n,).
        weights: Power fractions summing to one, shape (n,).
        stokes: Per-slice normalized Stokes vectors, shape (n, 4).
        mu: Mean photon number per symbol.
        center_nm: Reference wavelength of the ensemble.
    """

    lambdas_nm: NDArray[np.float64]
    weights: NDArray[np.float64]
    stokes: NDArray[np.float64]
    mu: float
    center_nm: float

    def __post_init__(self) -> None:
        lambdas = np.asarray(self.lambdas_nm, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        stokes = np.asarray(self.stokes, dtype=float)
        if lambdas.ndim != 1 or len(lambdas) == 0:
            raise EmptyEnsembleError("ensemble")
        if weights.shape != lambdas.shape or stokes.shape != (len(lambdas), 4):
            raise InvalidStateError("ensemble arrays have inconsistent shapes",
                                    quantity="ensemble")
        if np.any(np.diff(lambdas) <= 0.0):
            raise InvalidStateError("slice wavelengths must be strictly increasing",
                                    quantity="ensemble")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidStateError("slice weights must be non-negative and sum to 1",
                                    quantity="ensemble")
        if self.mu < 0.0:
            raise InvalidStateError(f"mu must be non-negative, got {self.mu}",
                                    quantity="ensemble")
        for array in (lambdas, weights, stokes):
            array.setflags(write=False)
        object.__setattr__(self, "lambdas_nm", lambdas)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "stokes", stokes)

    def __len__(self) -> int:
        return len(self.lambdas_nm)

    def __iter__(self) -> Iterator[SpectralSlice]:
        return iter(self.slices)

    @property
    def slices(self) -> list[SpectralSlice]:
        """Per-slice view of the ensemble."""
        return [SpectralSlice(float(lam), float(w), StokesVector.from_array(s))
                for lam, w, s in zip(self.lambdas_nm, self.weights, self.stokes)]

    @property
    def frequencies_hz(self) -> NDArray[np.float64]:
        """Optical frequency of every slice."""
        return optical_frequency_hz(self.lambdas_nm)

    def with_stokes(self, stokes: ArrayLike) -> SliceEnsemble:
        """Same slices carrying new states."""
        return SliceEnsemble(self.lambdas_nm, self.weights,
                             np.asarray(stokes, dtype=float), self.mu,
                             self.center_nm)

    def with_mu(self, mu: float) -> SliceEnsemble:
        """Same slices with another mean photon number."""
        return SliceEnsemble(self.lambdas_nm, self.weights, self.stokes,
                             float(mu), self.center_nm)


def optical_frequency_hz(lambda_nm: ArrayLike) -> NDArray[np.float64]:
    """Vacuum frequency c/λ for wavelengths in nm."""
    return constants.c / (np.asarray(lambda_nm, dtype=float) * 1e-9)


def slice_spectrum(spec: SourceSpectrum, n: int, *, mu: float = 0.0
                   ) -> SliceEnsemble:
    """Cut a spectrum into ``n`` equal-width bins.

    Each slice sits at its bin midpoint and weighs the normalized integrated
    density of the bin. States start unpolarized; the encoder replaces them.

    Args:
        spec: Spectrum to slice.
        n: Number of slices, at least one.
        mu: Mean photon number per symbol carried by the ensemble.

    Raises:
        ScenarioConfigError: If ``n`` is not positive.
    """
    if n < 1:
        raise ScenarioConfigError([f"source.n_slices: must be >= 1, got {n}"])
    lo, hi = spec.support_nm()
    edges = np.linspace(lo, hi, n + 1)
    powers = np.clip(spec.bin_powers(edges), 0.0, None)
    total = powers.sum()
    if total <= 0.0:
        raise ScenarioConfigError(["source: spectrum carries no power"])
    weights = powers / total
    weights = weights / weights.sum()
    stokes = np.zeros((n, 4))
    stokes[:, 0] = 1.0
    return SliceEnsemble(0.5 * (edges[:-1] + edges[1:]), weights, stokes,
                         float(mu), spec.center_nm)


def photon_energy_j(lambda_nm: float) -> float:
    """Energy h·c/λ of one photon."""
    return constants.h * constants.c / (lambda_nm * 1e-9)


def launch_power_dbm(mu: float, rate: float, lambda_nm: float) -> float:
    """Optical power that carries ``mu`` photons per symbol at ``rate``.

    Args:
        mu: Mean photon number per symbol.
        rate: Symbol rate in symbols per second.
        lambda_nm: Wavelength in nm.

    Returns:
        ``10·log10(mu·rate·h·c/λ / 1 mW)``.

    Example:
        >>> round(launch_power_dbm(0.1, 1e8, 1581.0), 1)
        -89.0
    """
    watts = mu * rate * photon_energy_j(lambda_nm)
    return 10.0 * math.log10(watts / 1e-3)


def headroom_db(source_dbm: float, mu: float, rate: float,
                lambda_nm: float) -> float:
    """Margin between the source power and the required launch power."""
    return source_dbm - launch_power_dbm(mu, rate, lambda_nm)


def sample_photon_count(mean: float | ArrayLike, rng: np.random.Generator,
                        size: int | tuple[int, ...] | None = None
                        ) -> int | NDArray[np.int64]:
    """Draw Poisson photon numbers.

    Args:
        mean: Non-negative mean photon number (scalar or array).
        rng: Random stream owned by the caller.
        size: Optional output shape for repeated draws.

    Returns:
        A single count when ``mean`` is scalar and ``size`` is None,
        otherwise an integer array.
    """
    counts = rng.poisson(mean, size=size)
    if np.ndim(counts) == 0:
        return int(counts)
    return counts
