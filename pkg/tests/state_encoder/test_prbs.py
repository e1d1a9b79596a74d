import numpy as np
import pytest

from bb84sim import ScenarioConfigError
from bb84sim.prbs import prbs_bits, sequence_period, start_state


@pytest.mark.parametrize("order", [7, 9, 11])
def test_register_is_maximal_length(order):
    period = sequence_period(order)
    bits = prbs_bits(order, 2 * period, 1)
    assert np.array_equal(bits[:period], bits[period:])
    for shift in (1, 2, period // 2):
        assert not np.array_equal(bits[:period], np.roll(bits[:period], shift))
    assert int(bits[:period].sum()) == (period + 1) // 2


def test_start_state_is_deterministic_and_nonzero():
    a = start_state(15, 42, 0)
    assert a == start_state(15, 42, 0)
    assert a != start_state(15, 42, 1)
    assert 0 < a <= sequence_period(15)


def test_unsupported_orders_and_zero_state():
    with pytest.raises(ScenarioConfigError):
        sequence_period(6)
    with pytest.raises(ScenarioConfigError):
        prbs_bits(32, 10, 1)
    with pytest.raises(ScenarioConfigError):
        prbs_bits(7, 10, 0)
