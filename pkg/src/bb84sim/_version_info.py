"""Version information for the bb84sim package."""

from importlib import metadata as _md

try:
    __version__ = _md.version("bb84sim")
except _md.PackageNotFoundError:
    __version__ = "unknown"
