"""Directory-backed cache of sweep points and reports.

Each value lives in its own file under ``base_dir``; a key is a tuple of
strings mapped to nested sub-directories and a file name. Values are
written atomically (temporary file, fsync, rename) with retry and backoff
so concurrent sweep workers never expose partially written results.

Two serialization formats are supported:

- ``"pkl"``: joblib pickles compressed with lz4.
- ``"json"``: jsonpickle JSON with numpy and pandas handlers registered,
  readable by people and other tools.
"""

from __future__ import annotations

import os
import random
import string
import tempfile
import time
from collections.abc import Callable, Iterator
from pathlib import Path
from typing import Any, Final

import joblib
import jsonpickle
import jsonpickle.ext.numpy as jsonpickle_numpy
import jsonpickle.ext.pandas as jsonpickle_pandas
from mixinforge import sort_dict_by_keys

from .exceptions import ResultIOError
from .parameters import ConfigObject

jsonpickle_numpy.register_handlers()
jsonpickle_pandas.register_handlers()

SAFE_CHARS_SET: Final[frozenset[str]] = frozenset(
    string.ascii_letters + string.digits + "()_-~.=")
SAFE_STRING_MAX_LENGTH: Final[int] = 254
SERIALIZATION_FORMATS: Final[tuple[str, ...]] = ("pkl", "json")

StoreKey = str | tuple[str, ...]


def replace_unsafe_chars(a_str: str, replace_with: str = "_") -> str:
    """Replace characters that are unsafe in file names."""
    return "".join(c if c in SAFE_CHARS_SET else replace_with for c in a_str)


def _with_retry(fn: Callable[..., Any], *args: Any, n_retries: int = 8,
                retried_exceptions: tuple[type[BaseException], ...] = (PermissionError,),
                immediately_raised_exceptions: tuple[type[BaseException], ...] = (),
                **kwargs: Any) -> Any:
    """Execute a callable with exponential backoff on transient errors."""
    for i in range(n_retries):
        try:
            return fn(*args, **kwargs)
        except immediately_raised_exceptions:
            raise
        except retried_exceptions:
            if i < n_retries - 1:
                time.sleep(random.uniform(0.01, 0.1) * (1.75 ** i))
            else:
                raise
    raise AssertionError("unreachable")


class ResultStore(ConfigObject):
    """Persistent mapping from string-tuple keys to result objects.

    Attributes:
        base_dir: Root directory of the store.
        serialization_format: ``"pkl"`` or ``"json"``.
    """

    def __init__(self, *, base_dir: str | Path = ".bb84sim_cache",
                 serialization_format: str = "pkl"):
        if serialization_format not in SERIALIZATION_FORMATS:
            raise ValueError(f"serialization_format must be one of "
                             f"{SERIALIZATION_FORMATS}, got {serialization_format!r}")
        self.serialization_format = serialization_format
        self._base_dir = Path(base_dir).resolve()
        try:
            self._base_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ResultIOError(f"cannot create store directory: {exc}",
                                path=str(self._base_dir), operation="mkdir") from exc
        ConfigObject.__init__(self)

    def get_params(self) -> dict[str, Any]:
        params = dict(base_dir=str(self._base_dir),
                      serialization_format=self.serialization_format)
        return sort_dict_by_keys(params)

    @property
    def base_dir(self) -> Path:
        return self._base_dir

    def _path(self, key: StoreKey) -> Path:
        parts = (key,) if isinstance(key, str) else tuple(key)
        if not parts:
            raise KeyError("store keys must not be empty")
        safe = [replace_unsafe_chars(str(p))[:SAFE_STRING_MAX_LENGTH] for p in parts]
        return self._base_dir.joinpath(*safe[:-1], f"{safe[-1]}.{self.serialization_format}")

    def _save_impl(self, path: Path, value: Any) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(dir=path.parent, prefix=".__tmp__")
        try:
            if self.serialization_format == "pkl":
                with open(fd, "wb") as f:
                    joblib.dump(value, f, compress="lz4")
                    f.flush()
                    os.fsync(f.fileno())
            else:
                with open(fd, "w", encoding="utf-8") as f:
                    f.write(jsonpickle.dumps(value, indent=2))
                    f.flush()
                    os.fsync(f.fileno())
            os.replace(temp_path, path)
        except Exception:
            try:
                os.remove(temp_path)
            finally:
                raise

    def _load_impl(self, path: Path) -> Any:
        if self.serialization_format == "pkl":
            with open(path, "rb") as f:
                return joblib.load(f)
        with open(path, encoding="utf-8") as f:
            return jsonpickle.loads(f.read())

    def __contains__(self, key: object) -> bool:
        return self._path(key).is_file()  # type: ignore[arg-type]

    def __getitem__(self, key: StoreKey) -> Any:
        path = self._path(key)
        try:
            return _with_retry(self._load_impl, path, retried_exceptions=(OSError,),
                               immediately_raised_exceptions=(FileNotFoundError,))
        except FileNotFoundError as exc:
            raise KeyError(key) from exc
        except OSError as exc:
            raise ResultIOError(f"cannot read {path}: {exc}", path=str(path),
                                operation="read") from exc

    def __setitem__(self, key: StoreKey, value: Any) -> None:
        path = self._path(key)
        try:
            _with_retry(self._save_impl, path, value, retried_exceptions=(OSError,))
        except OSError as exc:
            raise ResultIOError(f"cannot write {path}: {exc}", path=str(path),
                                operation="write") from exc

    def __delitem__(self, key: StoreKey) -> None:
        path = self._path(key)
        try:
            _with_retry(os.remove, path, immediately_raised_exceptions=(FileNotFoundError,))
        except FileNotFoundError as exc:
            raise KeyError(key) from exc

    def keys(self) -> Iterator[tuple[str, ...]]:
        """Stored keys in sorted path order (sanitized form)."""
        suffix = f".{self.serialization_format}"
        for path in sorted(self._base_dir.rglob(f"*{suffix}")):
            if path.name.startswith(".__tmp__"):
                continue
            relative = path.relative_to(self._base_dir)
            yield (*relative.parts[:-1], relative.name[:-len(suffix)])

    def __iter__(self) -> Iterator[tuple[str, ...]]:
        return self.keys()

    def __len__(self) -> int:
        return sum(1 for _ in self.keys())

    def get(self, key: StoreKey, default: Any = None) -> Any:
        try:
            return self[key]
        except KeyError:
            return default

    def clear(self) -> None:
        for key in list(self.keys()):
            del self[key]
