import pytest

from bb84sim import prbs_frame

from tests.bb84_protocol.synthetic_records import RATE_HZ


@pytest.fixture
def frame():
    return prbs_frame(9, 511, RATE_HZ, 0.1, seed=4)
