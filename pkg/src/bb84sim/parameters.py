"""Shared base for keyword-only configuration objects.

Configuration classes validate in ``__init__``, report their constructor
arguments through ``get_params()`` and can therefore be copied, compared,
hashed into a scenario digest and rebuilt from plain dictionaries.
"""

from __future__ import annotations

from typing import Any, Self

from mixinforge import ParameterizableMixin


class ConfigObject(ParameterizableMixin):
    """Parameterizable value object.

    Subclasses call ``ConfigObject.__init__(self)`` at the end of their own
    constructor and implement ``get_params()`` returning a dictionary sorted
    with ``mixinforge.sort_dict_by_keys``.
    """

    def __init__(self) -> None:
        ParameterizableMixin.__init__(self)

    def get_params(self) -> dict[str, Any]:
        """Return the constructor parameters of this object."""
        raise NotImplementedError

    def replace(self, **changes: Any) -> Self:
        """Return a copy with some constructor parameters changed."""
        return self.__class__(**{**self.get_params(), **changes})

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self.get_params() == other.get_params()

    def __hash__(self) -> int:
        return hash((type(self).__name__, repr(self)))

    def __repr__(self) -> str:
        """Return a reproducible string representation.

        Returns:
            Representation including class name and constructor parameters.
        """
        params = self.get_params()
        params_str = ", ".join(f"{k}={v!r}" for k, v in params.items())
        return f"{self.__class__.__name__}({params_str})"
