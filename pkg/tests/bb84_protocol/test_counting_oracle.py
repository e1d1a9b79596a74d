"""Sifting and QBER against straightforward per-symbol counting."""

import numpy as np
import pytest

from bb84sim import RecordSet, SymbolFrame, compute_qber, sift


def _brute_force(frame, symbols, basis, bits, shift):
    by_symbol = {}
    for s, b, c in zip(symbols, basis, bits):
        by_symbol.setdefault(int(s), []).append((int(b), int(c)))
    sifted = errors = doubles = 0
    for s, clicks in by_symbol.items():
        if len(clicks) > 1:
            doubles += 1
            continue
        b, c = clicks[0]
        p = (s + shift) % len(frame)
        if frame.basis[p] == b:
            sifted += 1
            errors += int(frame.bits[p] != c)
    return sifted, errors, doubles


@pytest.mark.parametrize("instance", range(100))
def test_sift_and_qber_match_counting(instance):
    rng = np.random.default_rng(1000 + instance)
    n_symbols, n_positions = 1000, int(rng.integers(8, 200))
    frame = SymbolFrame(rng.integers(0, 2, n_positions), rng.integers(0, 2, n_positions),
                        1e8, 0.1, 7)
    n_clicks = int(rng.integers(1, 600))
    symbols = rng.integers(0, n_symbols, n_clicks)
    basis = (symbols >= n_symbols // 2).astype(np.uint8)
    bits = rng.integers(0, 2, n_clicks)
    shift = int(rng.integers(0, n_positions))
    key = sift(frame, RecordSet(symbols, basis, bits, bits), shift)
    sifted, errors, doubles = _brute_force(frame, symbols, basis, bits, shift)
    assert len(key) == sifted
    assert int(np.count_nonzero(key.errors)) == errors
    assert key.double_clicks == doubles
    if sifted:
        report = compute_qber(key, 1e-5)
        assert report.qber == errors / sifted
        assert report.sifted_count == sifted
