"""Scenario configuration: TOML sections, validation, hashing and seeding.

A scenario file has the sections ``[source]``, ``[encoder]``, ``[fiber]``,
``[detector0]``, ``[detector1]``, ``[receiver]``, ``[protocol]`` and
``[run]``. Units are carried in key names. Validation collects every
violated field across all sections before raising one
``ScenarioConfigError``.

Shipped presets live in the ``scenarios`` package-data directory and are
loaded by bare name (``load_scenario("ase_ob_sweep")``).
"""

from __future__ import annotations

import logging
import math
import tomllib
from collections.abc import Callable, Mapping, Sequence
from importlib import resources
from pathlib import Path
from typing import Any, Final

import joblib.hashing
import numpy as np
from mixinforge import sort_dict_by_keys

from .encoder import Architecture, BasisSet, EncoderConfig
from .exceptions import ResultIOError, ScenarioConfigError
from .fiber import (DEFAULT_ATTEN_DB_PER_KM, DEFAULT_PMD_PS_SQRTKM,
                    DEFAULT_REF_LAMBDA_NM, FiberModel, build_fiber, concatenate)
from .flags import double_click_policy
from .parameters import ConfigObject
from .prbs import check_order, sequence_period
from .receiver import DetectorParams
from .source import (SourceSpectrum, SpectrumShape, read_spectrum_csv,
                     spectrum_preset)

logger = logging.getLogger(__name__)

SECTIONS: Final[tuple[str, ...]] = (
    "source", "encoder", "fiber", "detector0", "detector1",
    "receiver", "protocol", "run")

STREAM_KEYS: Final[dict[str, int]] = {
    "source": 1, "fiber": 2, "detector0": 3, "detector1": 4,
    "drift": 5, "alice": 6, "sift": 7, "chunk": 8, "span": 9,
}
"""Counter keys of the named random substreams."""

PRESET_PACKAGE: Final[str] = "bb84sim"
PRESET_DIR: Final[str] = "scenarios"


class SourceConfig(ConfigObject):
    """Emitter spectrum and slicing.

    Attributes:
        preset: Name of a built-in spectrum; overrides the shape fields.
        shape: Spectrum shape when no preset or CSV is given.
        center_nm: Center wavelength.
        width_nm: Optical bandwidth δλ (full width or FWHM).
        spectrum_csv: Path of a measured spectrum, optional.
        n_slices: Number of monochromatic slices.
        max_output_dbm: Source power used for the headroom table.
    """

    def __init__(self,
                 *,
                 preset: str | None = None,
                 shape: str = str(SpectrumShape.RECTANGULAR),
                 center_nm: float = 1578.0,
                 width_nm: float = 1.0,
                 spectrum_csv: str | None = None,
                 n_slices: int = 64,
                 max_output_dbm: float | None = None):
        self.preset = preset
        self.shape = str(shape)
        self.center_nm = float(center_nm)
        self.width_nm = float(width_nm)
        self.spectrum_csv = spectrum_csv
        self.n_slices = int(n_slices)
        self.max_output_dbm = None if max_output_dbm is None else float(max_output_dbm)
        violations = []
        if self.n_slices < 1:
            violations.append(f"source.n_slices: must be >= 1, got {self.n_slices}")
        if self.preset is None and self.spectrum_csv is None:
            try:
                SpectrumShape(self.shape)
            except ValueError:
                violations.append(f"source.shape: unknown {self.shape!r}")
        if violations:
            raise ScenarioConfigError(violations)
        self._spectrum: SourceSpectrum | None = None
        if self.preset is not None:
            self._spectrum = spectrum_preset(self.preset)
        elif self.spectrum_csv is None:
            self._spectrum = SourceSpectrum(shape=self.shape, center_nm=self.center_nm,
                                            width_nm=self.width_nm)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(preset=self.preset, shape=self.shape,
                      center_nm=self.center_nm, width_nm=self.width_nm,
                      spectrum_csv=self.spectrum_csv, n_slices=self.n_slices,
                      max_output_dbm=self.max_output_dbm)
        return sort_dict_by_keys(params)

    def spectrum(self) -> SourceSpectrum:
        """The spectrum to slice; measured spectra are read on demand."""
        if self._spectrum is None:
            assert self.spectrum_csv is not None
            self._spectrum = read_spectrum_csv(self.spectrum_csv)
        return self._spectrum

    def with_width(self, width_nm: float) -> SourceConfig:
        """Same source filtered to another bandwidth."""
        spec = self.spectrum()
        shape = spec.shape
        if shape is SpectrumShape.TABULATED:
            shape = SpectrumShape.RECTANGULAR
        return self.replace(preset=None, spectrum_csv=None, shape=str(shape),
                            center_nm=spec.center_nm, width_nm=width_nm)


class FiberConfig(ConfigObject):
    """Spool and deployed spans between Alice and Bob.

    Attributes:
        length_km: Spool length; zero is back-to-back.
        pmd_coeff_ps_sqrtkm: PMD coefficient.
        n_segments: Waveplates of the spool; ``None`` for the default.
        atten_db_per_km: Spool attenuation.
        drift_rate: Random-walk scale of the spool (rad/√hour).
        seed: Fiber realization; ``None`` derives it from the master seed.
        ref_lambda_nm: Wavelength anchoring the retardances.
        deployed_spans: Extra spans as ``{"length_km", "drift_rate"}`` tables.
    """

    def __init__(self,
                 *,
                 length_km: float = 0.0,
                 pmd_coeff_ps_sqrtkm: float = DEFAULT_PMD_PS_SQRTKM,
                 n_segments: int | None = None,
                 atten_db_per_km: float = DEFAULT_ATTEN_DB_PER_KM,
                 drift_rate: float = 0.0,
                 seed: int | None = None,
                 ref_lambda_nm: float = DEFAULT_REF_LAMBDA_NM,
                 deployed_spans: Sequence[Mapping[str, float]] = ()):
        self.length_km = float(length_km)
        self.pmd_coeff_ps_sqrtkm = float(pmd_coeff_ps_sqrtkm)
        self.n_segments = None if n_segments is None else int(n_segments)
        self.atten_db_per_km = float(atten_db_per_km)
        self.drift_rate = float(drift_rate)
        self.seed = None if seed is None else int(seed)
        self.ref_lambda_nm = float(ref_lambda_nm)
        self.deployed_spans = [dict(length_km=float(s.get("length_km", 0.0)),
                                    drift_rate=float(s.get("drift_rate", 0.0)))
                               for s in deployed_spans]
        violations = []
        if self.length_km < 0.0:
            violations.append("fiber.length_km: must be >= 0")
        if self.pmd_coeff_ps_sqrtkm < 0.0:
            violations.append("fiber.pmd_coeff_ps_sqrtkm: must be >= 0")
        if self.n_segments is not None and self.n_segments < 1:
            violations.append("fiber.n_segments: must be >= 1")
        if self.atten_db_per_km < 0.0:
            violations.append("fiber.atten_db_per_km: must be >= 0")
        if self.drift_rate < 0.0:
            violations.append("fiber.drift_rate: must be >= 0")
        for i, span in enumerate(self.deployed_spans):
            if span["length_km"] <= 0.0 or span["drift_rate"] < 0.0:
                violations.append(f"fiber.deployed_spans[{i}]: needs length_km > 0 "
                                  "and drift_rate >= 0")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(length_km=self.length_km,
                      pmd_coeff_ps_sqrtkm=self.pmd_coeff_ps_sqrtkm,
                      n_segments=self.n_segments,
                      atten_db_per_km=self.atten_db_per_km,
                      drift_rate=self.drift_rate, seed=self.seed,
                      ref_lambda_nm=self.ref_lambda_nm,
                      deployed_spans=[dict(s) for s in self.deployed_spans])
        return sort_dict_by_keys(params)

    def build(self, master_seed: int) -> FiberModel:
        """Draw the spool and append the deployed spans."""
        seed = self.seed if self.seed is not None else substream_seed(master_seed, "fiber")
        spool = build_fiber(self.length_km, self.pmd_coeff_ps_sqrtkm,
                            self.n_segments, self.atten_db_per_km,
                            self.drift_rate, seed, ref_lambda_nm=self.ref_lambda_nm)
        if not self.deployed_spans:
            return spool
        spans = [build_fiber(s["length_km"], self.pmd_coeff_ps_sqrtkm, None,
                             self.atten_db_per_km, s["drift_rate"],
                             substream_seed(seed, "span", i),
                             ref_lambda_nm=self.ref_lambda_nm)
                 for i, s in enumerate(self.deployed_spans)]
        return concatenate([spool, *spans])

    @property
    def total_length_km(self) -> float:
        return self.length_km + sum(s["length_km"] for s in self.deployed_spans)


class ReceiverConfig(ConfigObject):
    """Bob's analyzer, temporal filter and unmodelled losses.

    Attributes:
        window_fraction: Temporal filter width as a fraction of the period.
        offset_s: Time origin of received symbol zero.
        insertion_loss_db: Analyzer and coupling loss in front of the
            detectors, applied on top of the detector efficiency.
        dark_acceptance: Fraction of the datasheet dark count rate that
            survives discrimination in the receiver electronics.
        align: Manually align the received reference states before
            measuring.
    """

    def __init__(self,
                 *,
                 window_fraction: float = 0.5,
                 offset_s: float = 0.0,
                 insertion_loss_db: float = 0.0,
                 dark_acceptance: float = 1.0,
                 align: bool = True):
        self.window_fraction = float(window_fraction)
        self.offset_s = float(offset_s)
        self.insertion_loss_db = float(insertion_loss_db)
        self.dark_acceptance = float(dark_acceptance)
        self.align = bool(align)
        violations = []
        if not 0.0 < self.window_fraction <= 1.0:
            violations.append("receiver.window_fraction: must be in (0, 1]")
        if self.insertion_loss_db < 0.0:
            violations.append("receiver.insertion_loss_db: must be >= 0")
        if self.dark_acceptance < 0.0:
            violations.append("receiver.dark_acceptance: must be >= 0")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(window_fraction=self.window_fraction, offset_s=self.offset_s,
                      insertion_loss_db=self.insertion_loss_db,
                      dark_acceptance=self.dark_acceptance, align=self.align)
        return sort_dict_by_keys(params)

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 10.0)


class ProtocolConfig(ConfigObject):
    """Symbol clock, launch level and framing.

    Attributes:
        rate_hz: Symbol rate.
        mu: Launch mean photon number per symbol.
        prbs_order: Register order of the frame PRBS.
        frame_symbols: Frame length; ``None`` uses one full PRBS period.
        double_click: ``"discard"`` or ``"random"``.
        n_batches: Consecutive batches for the QBER spread; 0 disables.
        max_shift: Largest frame shift searched; ``None`` searches all.
    """

    def __init__(self,
                 *,
                 rate_hz: float = 1e8,
                 mu: float = 0.1,
                 prbs_order: int = 15,
                 frame_symbols: int | None = None,
                 double_click: str = "discard",
                 n_batches: int = 0,
                 max_shift: int | None = None):
        self.rate_hz = float(rate_hz)
        self.mu = float(mu)
        self.prbs_order = int(prbs_order)
        self.frame_symbols = None if frame_symbols is None else int(frame_symbols)
        self.double_click = str(double_click)
        self.n_batches = int(n_batches)
        self.max_shift = None if max_shift is None else int(max_shift)
        violations = []
        if not self.rate_hz > 0.0:
            violations.append("protocol.rate_hz: must be > 0")
        if self.mu < 0.0:
            violations.append("protocol.mu: must be >= 0")
        try:
            check_order(self.prbs_order)
        except ScenarioConfigError as exc:
            violations.extend(exc.violations)
        if self.frame_symbols is not None and self.frame_symbols < 2:
            violations.append("protocol.frame_symbols: must be >= 2")
        try:
            double_click_policy(self.double_click)
        except ScenarioConfigError as exc:
            violations.extend(exc.violations)
        if self.n_batches < 0 or self.n_batches == 1:
            violations.append("protocol.n_batches: must be 0 or >= 2")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(rate_hz=self.rate_hz, mu=self.mu, prbs_order=self.prbs_order,
                      frame_symbols=self.frame_symbols,
                      double_click=self.double_click, n_batches=self.n_batches,
                      max_shift=self.max_shift)
        return sort_dict_by_keys(params)

    @property
    def frame_length(self) -> int:
        if self.frame_symbols is not None:
            return self.frame_symbols
        return sequence_period(self.prbs_order)


class RunConfig(ConfigObject):
    """Execution controls.

    Attributes:
        symbols: Symbols to simulate; rounded up to an even number of
            whole frames so both bases get equal time.
        master_seed: Root of every random substream.
        threads: Worker threads for Monte Carlo chunks and sweep points.
        chunk_frames: Frame repetitions per Monte Carlo chunk; results do
            not depend on ``threads``.
        optical_budget_db: Neutral loss between Alice and Bob.
        noise_floor: Allow μ = 0 and sift with the transmitted alignment.
        seeds: Fiber realizations averaged by length sweeps.
    """

    def __init__(self,
                 *,
                 symbols: int = 10_000_000,
                 master_seed: int = 0,
                 threads: int = 1,
                 chunk_frames: int = 1024,
                 optical_budget_db: float = 0.0,
                 noise_floor: bool = False,
                 seeds: int = 1):
        self.symbols = int(symbols)
        self.master_seed = int(master_seed)
        self.threads = int(threads)
        self.chunk_frames = int(chunk_frames)
        self.optical_budget_db = float(optical_budget_db)
        self.noise_floor = bool(noise_floor)
        self.seeds = int(seeds)
        violations = []
        if self.symbols < 2:
            violations.append("run.symbols: must be >= 2")
        if self.master_seed < 0:
            violations.append("run.master_seed: must be a non-negative integer")
        if self.threads < 1:
            violations.append("run.threads: must be >= 1")
        if self.chunk_frames < 1:
            violations.append("run.chunk_frames: must be >= 1")
        if self.seeds < 1:
            violations.append("run.seeds: must be >= 1")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(symbols=self.symbols, master_seed=self.master_seed,
                      threads=self.threads, chunk_frames=self.chunk_frames,
                      optical_budget_db=self.optical_budget_db,
                      noise_floor=self.noise_floor, seeds=self.seeds)
        return sort_dict_by_keys(params)


_SECTION_TYPES: Final[dict[str, Callable[..., ConfigObject]]] = {
    "source": SourceConfig, "encoder": EncoderConfig, "fiber": FiberConfig,
    "detector0": DetectorParams, "detector1": DetectorParams,
    "receiver": ReceiverConfig, "protocol": ProtocolConfig, "run": RunConfig,
}


class Scenario(ConfigObject):
    """A complete, validated simulation setup."""

    def __init__(self,
                 *,
                 name: str = "custom",
                 source: SourceConfig | None = None,
                 encoder: EncoderConfig | None = None,
                 fiber: FiberConfig | None = None,
                 detector0: DetectorParams | None = None,
                 detector1: DetectorParams | None = None,
                 receiver: ReceiverConfig | None = None,
                 protocol: ProtocolConfig | None = None,
                 run: RunConfig | None = None):
        self.name = str(name)
        self.source = source or SourceConfig()
        self.encoder = encoder or EncoderConfig()
        self.fiber = fiber or FiberConfig()
        self.detector0 = detector0 or DetectorParams(name="detector0")
        self.detector1 = detector1 or DetectorParams(name="detector1")
        self.receiver = receiver or ReceiverConfig()
        self.protocol = protocol or ProtocolConfig()
        self.run = run or RunConfig()
        violations = []
        if self.protocol.mu == 0.0 and not self.run.noise_floor:
            violations.append("protocol.mu: must be > 0 unless run.noise_floor is set")
        if self.protocol.frame_length > self.run.symbols:
            violations.append("run.symbols: shorter than one frame")
        if violations:
            raise ScenarioConfigError(violations)
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params: dict[str, Any] = {s: getattr(self, s) for s in SECTIONS}
        params["name"] = self.name
        return sort_dict_by_keys(params)

    def as_dict(self) -> dict[str, Any]:
        """Nested plain dictionary, as written to a scenario file."""
        return {s: getattr(self, s).get_params() for s in SECTIONS}

    def with_section(self, section: str, **changes: Any) -> Scenario:
        """Copy with some fields of one section changed."""
        return self.replace(**{section: getattr(self, section).replace(**changes)})

    @property
    def basis_set(self) -> BasisSet:
        return self.encoder.basis_set

    @property
    def architecture(self) -> Architecture:
        return self.encoder.architecture

    @property
    def n_frames(self) -> int:
        """Transmitted frame repetitions, even and at least two."""
        frames = math.ceil(self.run.symbols / self.protocol.frame_length)
        return max(2, frames + frames % 2)

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.protocol.frame_length / self.protocol.rate_hz


def _build_section(section: str, values: Mapping[str, Any],
                   violations: list[str]) -> ConfigObject | None:
    factory = _SECTION_TYPES[section]
    kwargs = dict(values)
    if section.startswith("detector"):
        kwargs.setdefault("name", section)
    try:
        return factory(**kwargs)
    except ScenarioConfigError as exc:
        violations.extend(exc.violations)
    except TypeError as exc:
        violations.append(f"{section}: {exc}")
    return None


def scenario_from_dict(data: Mapping[str, Any], *, name: str = "custom") -> Scenario:
    """Build a scenario from parsed TOML.

    Raises:
        ScenarioConfigError: Listing every invalid field of every section.
    """
    violations: list[str] = []
    unknown = sorted(set(data) - set(SECTIONS))
    violations.extend(f"{key}: unknown section" for key in unknown)
    built: dict[str, Any] = {}
    for section in SECTIONS:
        values = data.get(section, {})
        if not isinstance(values, Mapping):
            violations.append(f"{section}: must be a table")
            continue
        config = _build_section(section, values, violations)
        if config is not None:
            built[section] = config
    if violations:
        raise ScenarioConfigError(violations)
    return Scenario(name=name, **built)


def preset_path(name: str) -> Path:
    """Location of a shipped scenario preset."""
    return Path(str(resources.files(PRESET_PACKAGE) / PRESET_DIR / f"{name}.toml"))


def preset_names() -> list[str]:
    folder = resources.files(PRESET_PACKAGE) / PRESET_DIR
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Read a scenario file, or a shipped preset by bare name.

    Raises:
        ScenarioConfigError: If the file is not valid TOML or fails
            validation.
        ResultIOError: If the file cannot be read.
    """
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in preset_names():
        path = preset_path(str(path_or_name))
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioConfigError([f"{path}: {exc}"]) from exc
    except OSError as exc:
        raise ResultIOError(f"cannot read scenario {path}: {exc}",
                            path=str(path), operation="read") from exc
    logger.debug("loaded scenario %s", path)
    return scenario_from_dict(data, name=path.stem)


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, Mapping):
        inner = ", ".join(f"{k} = {_toml_value(v)}" for k, v in value.items())
        return "{ " + inner + " }"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot write {type(value).__name__} to TOML")


def dump_scenario(scenario: Scenario, path: str | Path, *,
                  header: Sequence[str] = ()) -> Path:
    """Write a scenario as TOML; ``None`` fields are omitted.

    Raises:
        ResultIOError: If the file cannot be written.
    """
    lines = [f"# {h}" for h in header]
    for section, params in scenario.as_dict().items():
        lines.append(f"\n[{section}]")
        for key, value in params.items():
            if value is None or (section.startswith("detector") and key == "name"):
                continue
            lines.append(f"{key} = {_toml_value(value)}")
    path = Path(path)
    try:
        path.write_text("\n".join(lines).lstrip("\n") + "\n", encoding="utf-8")
    except OSError as exc:
        raise ResultIOError(f"cannot write scenario {path}: {exc}",
                            path=str(path), operation="write") from exc
    return path


def scenario_hash(scenario: Scenario) -> str:
    """MD5 digest of the nested parameter dictionary."""
    hasher = joblib.hashing.NumpyHasher(hash_name="md5")
    return str(hasher.hash(scenario.as_dict()))


def substream(master_seed: int, name: str, *counters: int) -> np.random.Generator:
    """Independent generator for a named consumer of randomness.

    Streams are keyed by ``(master_seed, name, *counters)`` so adding a
    consumer never reshuffles the others.
    """
    entropy = [int(master_seed), STREAM_KEYS[name], *(int(c) for c in counters)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def substream_seed(master_seed: int, name: str, *counters: int) -> int:
    """A 32-bit seed drawn from a named substream."""
    entropy = [int(master_seed), STREAM_KEYS[name], *(int(c) for c in counters)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
