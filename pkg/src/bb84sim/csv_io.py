"""CSV import and export with a provenance comment line.

Every file written here starts with::

    # bb84sim <version> scenario_hash=<md5> master_seed=<seed> [key=value ...]

followed by a header row. Readers skip the comment with ``comment="#"`` and
``read_provenance`` parses it back into a dictionary.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Final

import numpy as np
import pandas as pd

from ._version_info import __version__
from .encoder import BasisSet, SymbolFrame
from .exceptions import ResultIOError, ScenarioConfigError
from .protocol import QberReport
from .receiver import TagStream

logger = logging.getLogger(__name__)

TAG_COLUMNS: Final[tuple[str, ...]] = ("channel", "t_seconds")
FRAME_COLUMNS: Final[tuple[str, ...]] = ("symbol_index", "basis_index", "bit", "state_label")
TAG_TIME_FORMAT: Final[str] = "%.12f"


def provenance_line(scenario_hash: str, master_seed: int,
                    extra: Mapping[str, Any] | None = None) -> str:
    """The comment line identifying tool version, scenario and seed."""
    fields = [f"bb84sim {__version__}", f"scenario_hash={scenario_hash}",
              f"master_seed={master_seed}"]
    fields.extend(f"{k}={v}" for k, v in (extra or {}).items())
    return "# " + " ".join(fields)


def read_provenance(path: str | Path) -> dict[str, str]:
    """Parse the ``key=value`` fields of a file's provenance line.

    Returns an empty dictionary for files without one.
    """
    try:
        with open(path, encoding="utf-8") as f:
            first = f.readline()
    except OSError as exc:
        raise ResultIOError(f"cannot read {path}: {exc}", path=str(path),
                            operation="read") from exc
    if not first.startswith("#"):
        return {}
    fields = first[1:].split()
    result = {}
    if len(fields) >= 2 and fields[0] == "bb84sim":
        result["version"] = fields[1]
    for item in fields:
        if "=" in item:
            key, value = item.split("=", 1)
            result[key] = value
    return result


def write_csv(table: pd.DataFrame, path: str | Path, *, scenario_hash: str,
              master_seed: int, extra: Mapping[str, Any] | None = None,
              float_format: str | None = None) -> Path:
    """Write a table preceded by the provenance line.

    Raises:
        ResultIOError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(provenance_line(scenario_hash, master_seed, extra) + "\n")
            table.to_csv(f, index=False, float_format=float_format, lineterminator="\n")
    except OSError as exc:
        raise ResultIOError(f"cannot write {path}: {exc}", path=str(path),
                            operation="write") from exc
    logger.debug("wrote %d rows to %s", len(table), path)
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    """Read a table written by ``write_csv``.

    Raises:
        ResultIOError: If the file cannot be read.
    """
    try:
        return pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ResultIOError(f"cannot read {path}: {exc}", path=str(path),
                            operation="read") from exc


def tags_to_frame(tags: TagStream) -> pd.DataFrame:
    return pd.DataFrame({"channel": tags.channel.astype(int),
                         "t_seconds": np.round(tags.t_s, 12)})


def write_tags_csv(tags: TagStream, path: str | Path, *, scenario_hash: str,
                   master_seed: int, extra: Mapping[str, Any] | None = None) -> Path:
    """Export tags with 1 ps resolution, ordered by time."""
    return write_csv(tags_to_frame(tags), path, scenario_hash=scenario_hash,
                     master_seed=master_seed, extra=extra,
                     float_format=TAG_TIME_FORMAT)


def read_tags_csv(path: str | Path) -> TagStream:
    """Ingest a tag CSV with ``channel`` and ``t_seconds`` columns.

    Raises:
        ScenarioConfigError: If required columns are missing.
    """
    table = read_csv(path)
    missing = [c for c in TAG_COLUMNS if c not in table.columns]
    if missing:
        raise ScenarioConfigError([f"{path}: missing tag columns {missing}"])
    return TagStream(table["channel"].to_numpy(dtype=np.int8),
                     table["t_seconds"].to_numpy(dtype=float))


def frame_to_table(frame: SymbolFrame, basis_set: BasisSet) -> pd.DataFrame:
    return pd.DataFrame({"symbol_index": np.arange(len(frame)),
                         "basis_index": frame.basis.astype(int),
                         "bit": frame.bits.astype(int),
                         "state_label": frame.labels(basis_set)})


def write_frame_csv(frame: SymbolFrame, basis_set: BasisSet, path: str | Path, *,
                    scenario_hash: str, extra: Mapping[str, Any] | None = None) -> Path:
    """Export Alice's frame; rate, μ and PRBS order go to the provenance line."""
    info = dict(rate_hz=frame.rate_hz, mu=frame.mu, prbs_order=frame.prbs_order,
                frame_id=frame.frame_id, basis_set=str(basis_set), **(extra or {}))
    return write_csv(frame_to_table(frame, basis_set), path,
                     scenario_hash=scenario_hash, master_seed=frame.seed, extra=info)


def read_frame_csv(path: str | Path) -> SymbolFrame:
    """Rebuild a frame written by ``write_frame_csv``.

    Raises:
        ScenarioConfigError: If columns or provenance fields are missing.
    """
    table = read_csv(path)
    info = read_provenance(path)
    missing = [c for c in FRAME_COLUMNS[:3] if c not in table.columns]
    if missing or "rate_hz" not in info:
        raise ScenarioConfigError([f"{path}: not a frame file (missing {missing or 'rate_hz'})"])
    table = table.sort_values("symbol_index")
    return SymbolFrame(table["basis_index"].to_numpy(dtype=np.uint8),
                       table["bit"].to_numpy(dtype=np.uint8),
                       float(info["rate_hz"]), float(info.get("mu", 0.0)),
                       int(info.get("prbs_order", 15)), int(info.get("frame_id", 0)),
                       int(info.get("master_seed", 0)))


def report_to_frame(report: QberReport) -> pd.DataFrame:
    """One-row table of a report, with per-basis and per-detector columns."""
    row: dict[str, Any] = dict(report.as_row())
    for basis, b in sorted(report.per_basis.items()):
        row[f"qber_basis{basis}"] = b.qber
        row[f"raw_key_bps_basis{basis}"] = b.raw_key_bps
    for channel, b in sorted(report.per_channel.items()):
        row[f"qber_detector{channel}"] = b.qber
        row[f"sifted_detector{channel}"] = b.sifted_count
    row["raw_key_bps_4det_extrapolated"] = report.full_receiver_raw_key_bps()
    return pd.DataFrame([row])
