"""Maximal-length linear-feedback shift register sequences.

Tap sets are the classic maximal-length (primitive polynomial) choices for
register orders 7 through 31, so a register of order ``n`` repeats only
after ``2**n - 1`` bits for any non-zero start state.
"""

from __future__ import annotations

from typing import Final

import numpy as np
from numpy.typing import NDArray

from .exceptions import ScenarioConfigError

LFSR_TAPS: Final[dict[int, tuple[int, ...]]] = {
    7: (7, 6), 8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7), 11: (11, 9),
    12: (12, 6, 4, 1), 13: (13, 4, 3, 1), 14: (14, 5, 3, 1), 15: (15, 14),
    16: (16, 15, 13, 4), 17: (17, 14), 18: (18, 11), 19: (19, 6, 2, 1),
    20: (20, 17), 21: (21, 19), 22: (22, 21), 23: (23, 18),
    24: (24, 23, 22, 17), 25: (25, 22), 26: (26, 6, 2, 1), 27: (27, 5, 2, 1),
    28: (28, 25), 29: (29, 27), 30: (30, 6, 4, 1), 31: (31, 28),
}

MIN_ORDER: Final[int] = min(LFSR_TAPS)
MAX_ORDER: Final[int] = max(LFSR_TAPS)


def check_order(order: int) -> None:
    """Reject register orders without a tap table entry.

    Raises:
        ScenarioConfigError: If ``order`` is outside [7, 31].
    """
    if order not in LFSR_TAPS:
        raise ScenarioConfigError(
            [f"protocol.prbs_order: unsupported order {order} "
             f"(supported {MIN_ORDER}..{MAX_ORDER})"])


def sequence_period(order: int) -> int:
    """Length after which the bit stream repeats."""
    check_order(order)
    return (1 << order) - 1


def start_state(order: int, seed: int, frame_id: int) -> int:
    """Derive a non-zero register state from ``(seed, frame_id)``."""
    check_order(order)
    entropy = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF,
                                      int(frame_id)])
    draw = int(entropy.generate_state(1, dtype=np.uint64)[0])
    return 1 + draw % sequence_period(order)


def prbs_bits(order: int, n_bits: int, state: int) -> NDArray[np.uint8]:
    """Run a Fibonacci register and return ``n_bits`` output bits.

    Args:
        order: Register length in [7, 31].
        n_bits: Number of output bits.
        state: Non-zero start state; only the low ``order`` bits are used.

    Raises:
        ScenarioConfigError: If the order is unsupported or the state is zero.
    """
    check_order(order)
    width_mask = (1 << order) - 1
    state &= width_mask
    if state == 0:
        raise ScenarioConfigError(["protocol.prbs_seed: register state must be non-zero"])
    tap_mask = 0
    for tap in LFSR_TAPS[order]:
        tap_mask |= 1 << (tap - 1)
    top = order - 1
    out = np.empty(n_bits, dtype=np.uint8)
    for i in range(n_bits):
        out[i] = (state >> top) & 1
        feedback = (state & tap_mask).bit_count() & 1
        state = ((state << 1) | feedback) & width_mask
    return out
