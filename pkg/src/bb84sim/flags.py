"""Singleton policy flags for sifting and synchronization.

Double-click policy flags:
    - DISCARD_DOUBLE_CLICKS: drop symbols with clicks on both detectors.
    - ASSIGN_RANDOM_BIT: keep them with a uniformly random bit.

Synchronization fallback flags:
    - RAISE_ON_SYNC_FAILURE: propagate ``SyncFailureError``.
    - USE_TRANSMITTED_ALIGNMENT: fall back to the known transmitted shift.
"""

from __future__ import annotations

from typing import Final

from mixinforge import SingletonMixin

from .exceptions import ScenarioConfigError


class DoubleClickPolicy(SingletonMixin):
    """Base class for the handling of symbols clicking on both detectors."""

    config_name: str = ""


class DiscardDoubleClicksFlag(DoubleClickPolicy):
    """Drop the symbol and count it as a double click.

    Note:
        This is a singleton class; constructing it repeatedly returns the same
        instance.
    """

    config_name = "discard"


class AssignRandomBitFlag(DoubleClickPolicy):
    """Keep the symbol with a uniformly random bit (squashing)."""

    config_name = "random"


class SyncFallback(SingletonMixin):
    """Base class for what happens when no correlation peak is found."""


class RaiseOnSyncFailureFlag(SyncFallback):
    """Propagate the synchronization failure to the caller."""


class UseTransmittedAlignmentFlag(SyncFallback):
    """Use the transmitted frame alignment and mark the result as unsynced."""


DISCARD_DOUBLE_CLICKS: Final[DiscardDoubleClicksFlag] = DiscardDoubleClicksFlag()
"""Default double-click policy."""

ASSIGN_RANDOM_BIT: Final[AssignRandomBitFlag] = AssignRandomBitFlag()

RAISE_ON_SYNC_FAILURE: Final[RaiseOnSyncFailureFlag] = RaiseOnSyncFailureFlag()

USE_TRANSMITTED_ALIGNMENT: Final[UseTransmittedAlignmentFlag] = UseTransmittedAlignmentFlag()
"""Used by sweeps, where one unsynchronizable point must not abort the sweep."""


def double_click_policy(name: str) -> DoubleClickPolicy:
    """Resolve a policy from its configuration name.

    Raises:
        ScenarioConfigError: For an unknown name.
    """
    for policy in (DISCARD_DOUBLE_CLICKS, ASSIGN_RANDOM_BIT):
        if policy.config_name == name:
            return policy
    raise ScenarioConfigError(
        [f"protocol.double_click: unknown policy {name!r} (use 'discard' or 'random')"])
