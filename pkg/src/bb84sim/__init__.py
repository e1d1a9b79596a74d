"""Photon-level simulator of polarization-encoded BB84 with a broadband source.

The package models a single-photon QKD link end to end: a sliced emitter
spectrum, a polarization state encoder, a birefringent fiber with PMD and
drift, a two-detector SPAD receiver producing time tags, and the BB84
post-processing that turns tags into a sifted key and a QBER report.

Classes:

    StokesVector, JonesVector, PoincareRotation: Polarization primitives.
    SourceSpectrum, SliceEnsemble: Emitter spectrum and its weighted slices.
    EncoderConfig, BasisSet, SymbolFrame, CarvingGate: State preparation.
    FiberModel: Concatenated birefringent segments with drift.
    DetectorParams, AnalyzerConfig, TagStream: Receiver and its time tags.
    RecordSet, SiftedKey, QberReport: Post-processing results.
    Scenario: A complete, validated run configuration.
    ResultStore: Directory-backed cache of sweep points.

Functions:

    load_scenario(), dump_scenario(): Read and write scenario TOML files.
    simulate(), run_single(), predict_report(): Monte Carlo and analytic runs.
    sweep_ob(), sweep_bandwidth(), sweep_length(), drift_trace(), budget():
        Experiment harness.
    calibrate(): Fit unreported device parameters to anchor points.
    evaluate_tags(): Post-process an externally produced tag stream.

Constants:

    DISCARD_DOUBLE_CLICKS, ASSIGN_RANDOM_BIT: Double-click policies.
    RAISE_ON_SYNC_FAILURE, USE_TRANSMITTED_ALIGNMENT: Sync fallback flags.
"""

from ._version_info import __version__

from .exceptions import (InvalidStateError, AlignmentError, EmptyEnsembleError,
                         ScenarioConfigError, SyncFailureError, ResultIOError)
from .parameters import ConfigObject
from .polarization import (StokesVector, JonesVector, PoincareRotation,
                           minimal_rotation, degree_of_polarization, ensemble_mean)
from .source import (SpectrumShape, SourceSpectrum, SliceEnsemble, slice_spectrum,
                     spectrum_preset, read_spectrum_csv, launch_power_dbm, headroom_db)
from .encoder import (Architecture, Bb84State, BasisSet, EncoderConfig, SymbolFrame,
                      CarvingGate, prbs_frame, prepare_slices)
from .fiber import FiberModel, build_fiber, concatenate, propagate, trajectory
from .receiver import (DetectorParams, TimeTag, TagStream, AnalyzerConfig,
                       align_compensation, detect_frame)
from .flags import (DoubleClickPolicy, DiscardDoubleClicksFlag, AssignRandomBitFlag,
                    SyncFallback, RaiseOnSyncFailureFlag, UseTransmittedAlignmentFlag,
                    DISCARD_DOUBLE_CLICKS, ASSIGN_RANDOM_BIT,
                    RAISE_ON_SYNC_FAILURE, USE_TRANSMITTED_ALIGNMENT)
from .protocol import (RecordSet, SiftedKey, QberReport, temporal_filter,
                       frame_synchronize, sift, compute_qber, secure_fraction,
                       qber_threshold, evaluate_tags)
from .scenario import Scenario, load_scenario, dump_scenario, scenario_hash, preset_names
from .simulation import SimulationResult, Prediction, simulate, run_single, predict_report
from .result_store import ResultStore
from .sweeps import (SweepResult, sweep_ob, sweep_bandwidth, sweep_length,
                     drift_trace, budget)
from .calibration import calibrate, write_calibrated

__all__ = [
    '__version__',
    # Errors
    'InvalidStateError', 'AlignmentError', 'EmptyEnsembleError',
    'ScenarioConfigError', 'SyncFailureError', 'ResultIOError',
    'ConfigObject',
    # Polarization
    'StokesVector', 'JonesVector', 'PoincareRotation',
    'minimal_rotation', 'degree_of_polarization', 'ensemble_mean',
    # Source
    'SpectrumShape', 'SourceSpectrum', 'SliceEnsemble', 'slice_spectrum',
    'spectrum_preset', 'read_spectrum_csv', 'launch_power_dbm', 'headroom_db',
    # Encoder
    'Architecture', 'Bb84State', 'BasisSet', 'EncoderConfig', 'SymbolFrame',
    'CarvingGate', 'prbs_frame', 'prepare_slices',
    # Fiber
    'FiberModel', 'build_fiber', 'concatenate', 'propagate', 'trajectory',
    # Receiver
    'DetectorParams', 'TimeTag', 'TagStream', 'AnalyzerConfig',
    'align_compensation', 'detect_frame',
    # Flags
    'DoubleClickPolicy', 'DiscardDoubleClicksFlag', 'AssignRandomBitFlag',
    'SyncFallback', 'RaiseOnSyncFailureFlag', 'UseTransmittedAlignmentFlag',
    'DISCARD_DOUBLE_CLICKS', 'ASSIGN_RANDOM_BIT',
    'RAISE_ON_SYNC_FAILURE', 'USE_TRANSMITTED_ALIGNMENT',
    # Protocol
    'RecordSet', 'SiftedKey', 'QberReport', 'temporal_filter',
    'frame_synchronize', 'sift', 'compute_qber', 'secure_fraction',
    'qber_threshold', 'evaluate_tags',
    # Harness
    'Scenario', 'load_scenario', 'dump_scenario', 'scenario_hash', 'preset_names',
    'SimulationResult', 'Prediction', 'simulate', 'run_single', 'predict_report',
    'ResultStore', 'SweepResult', 'sweep_ob', 'sweep_bandwidth', 'sweep_length',
    'drift_trace', 'budget', 'calibrate', 'write_calibrated',
]
