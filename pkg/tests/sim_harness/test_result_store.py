import numpy as np
import pandas as pd
import pytest

from bb84sim import ResultStore


@pytest.mark.parametrize("serialization_format", ["pkl", "json"])
def test_store_round_trips_rows(tmp_path, serialization_format):
    store = ResultStore(base_dir=tmp_path, serialization_format=serialization_format)
    row = dict(sweep_var=3.0, qber=0.05, sifted_count=1200, sync_ok=True)
    store[("abc123", "analytic")] = row
    assert ("abc123", "analytic") in store
    assert store[("abc123", "analytic")] == row
    assert list(store.keys()) == [("abc123", "analytic")]


def test_store_keeps_arrays_and_frames(tmp_path):
    store = ResultStore(base_dir=tmp_path, serialization_format="json")
    store["array"] = np.arange(5.0)
    store["table"] = pd.DataFrame({"qber": [0.1, 0.2]})
    assert np.array_equal(store["array"], np.arange(5.0))
    assert store["table"].equals(pd.DataFrame({"qber": [0.1, 0.2]}))
    assert (tmp_path / "array.json").is_file()


def test_missing_keys(tmp_path):
    store = ResultStore(base_dir=tmp_path)
    with pytest.raises(KeyError):
        store["nothing"]
    with pytest.raises(KeyError):
        del store["nothing"]
    assert store.get("nothing", 7) == 7


def test_delete_and_clear(tmp_path):
    store = ResultStore(base_dir=tmp_path)
    for i in range(3):
        store[("sweep", f"point{i}")] = i
    del store[("sweep", "point1")]
    assert len(store) == 2
    store.clear()
    assert len(store) == 0


def test_unsafe_characters_are_sanitized(tmp_path):
    store = ResultStore(base_dir=tmp_path)
    store["a/b c"] = 1
    assert store["a/b c"] == 1
    assert (tmp_path / "a_b_c.pkl").is_file()


def test_unknown_format_is_rejected(tmp_path):
    with pytest.raises(ValueError):
        ResultStore(base_dir=tmp_path, serialization_format="xml")
