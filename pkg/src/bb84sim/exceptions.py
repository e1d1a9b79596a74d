"""Custom exception types for the bb84sim error-handling taxonomy.

Defines six exception classes:

- ``InvalidStateError``: a polarization state violates the Stokes cone or
  carries no power.
- ``AlignmentError``: a state has no polarized part to align or compare.
- ``EmptyEnsembleError``: an ensemble, frame or sifted key is empty.
- ``ScenarioConfigError``: a scenario lists one or more invalid fields.
- ``SyncFailureError``: no significant frame-correlation peak.
- ``ResultIOError``: an output or input file could not be handled.
"""

from __future__ import annotations

from collections.abc import Iterable


class InvalidStateError(ValueError):
    """A polarization quantity is undefined for the given state.

    Args:
        message: Human-readable description of the violation.
        quantity: Name of the quantity or type that was rejected
            (e.g. ``"jones"``, ``"stokes"``, ``"dop"``).

    Attributes:
        quantity: Name of the rejected quantity.
    """

    def __init__(self, message: str, *, quantity: str) -> None:
        super().__init__(message)
        self.quantity = quantity


class AlignmentError(ValueError):
    """A state carries no polarized part, so no direction is defined.

    Raised by alignment and angular-separation routines. The compensation
    cannot restore lost degree of polarization, only rotate a direction.

    Args:
        message: Human-readable description.
        dop: Degree of polarization of the offending state.

    Attributes:
        dop: Degree of polarization of the offending state.
    """

    def __init__(self, message: str, *, dop: float) -> None:
        super().__init__(message)
        self.dop = dop


class EmptyEnsembleError(ValueError):
    """A collection that must hold at least one element is empty.

    Args:
        what: Name of the empty collection (``"ensemble"``,
            ``"sifted key"``, ``"records"``).

    Attributes:
        what: Name of the empty collection.
    """

    def __init__(self, what: str) -> None:
        super().__init__(f"{what} is empty")
        self.what = what


class ScenarioConfigError(ValueError):
    """A scenario is invalid; every violated field is listed.

    Args:
        violations: One message per violated field, each starting with the
            dotted field name (``"fiber.length_km: must be >= 0"``).

    Attributes:
        violations: The collected violation messages.
    """

    def __init__(self, violations: Iterable[str]) -> None:
        self.violations = list(violations)
        joined = "; ".join(self.violations)
        super().__init__(f"invalid scenario ({len(self.violations)} "
                         f"violation(s)): {joined}")


class SyncFailureError(RuntimeError):
    """Frame synchronization found no significant correlation peak.

    Signals the wrong frame, a wrong rate, or noise overwhelming the signal.

    Args:
        peak_score: Best agreement score over all candidate shifts.
        threshold: Score the peak had to exceed.
        n_records: Number of detection records that were correlated.

    Attributes:
        peak_score: Best agreement score over all candidate shifts.
        threshold: Score the peak had to exceed.
        n_records: Number of detection records that were correlated.
    """

    def __init__(self, *, peak_score: float, threshold: float,
                 n_records: int) -> None:
        super().__init__(
            f"frame synchronization failed: peak score {peak_score:.1f} "
            f"does not exceed threshold {threshold:.1f} "
            f"({n_records} record(s))")
        self.peak_score = peak_score
        self.threshold = threshold
        self.n_records = n_records


class ResultIOError(RuntimeError):
    """Reading or writing a result, scenario or trace file failed.

    Must be raised with exception chaining
    (``raise ResultIOError(...) from exc``).

    Args:
        message: Human-readable description of the failure.
        path: File or directory involved.
        operation: Name of the failed operation (``"read"``, ``"write"``).

    Attributes:
        path: File or directory involved.
        operation: Name of the failed operation.
    """

    def __init__(self, message: str, *, path: str, operation: str) -> None:
        super().__init__(message)
        self.path = path
        self.operation = operation
