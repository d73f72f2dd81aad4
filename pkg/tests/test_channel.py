import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codemarl.channel import Channel, DelayModel, Message


def msg(sender, t, value=0.0):
    return Message(sender, np.full(2, value, dtype=np.float32), np.full(3, value, dtype=np.float32), t)


class Scripted:
    """Delay model stand-in returning a fixed sequence of delays."""

    def __init__(self, delays):
        self.delays = list(delays)

    def sample(self, rng):
        return self.delays.pop(0)


def test_parse_grammar():
    assert DelayModel.parse("none") == DelayModel("none")
    assert DelayModel.parse("fixed:3") == DelayModel.fixed(3)
    assert DelayModel.parse("gaussian:5,2") == DelayModel.gaussian(5, 2)
    assert DelayModel.parse("infinite").kind == "infinite"
    for spec in ("none", "fixed:3", "gaussian:5,2", "infinite"):
        assert str(DelayModel.parse(spec)) == spec
    for bad in ("fixed", "fixed:x", "gaussian:1", "uniform:3", "fixed:-1"):
        with pytest.raises(ValueError):
            DelayModel.parse(bad)


def test_gaussian_samples_are_rounded_and_clamped():
    rng = np.random.default_rng(0)
    model = DelayModel.gaussian(0.5, 3.0)
    draws = [model.sample(rng) for _ in range(2000)]
    assert all(isinstance(d, int) and d >= 0 for d in draws)
    assert DelayModel.infinite().sample(rng) == math.inf


def test_fixed3_exhaustive_visibility():
    ch = Channel(2, DelayModel.fixed(3))
    sent_at = {}
    for t in range(50):
        ch.broadcast(msg(0, t), t)
        sent_at[t] = True
        ch.deliver(t)
        held = ch.latest(1, 0)
        if t < 3:
            assert held is None
        else:
            # the newest visible message is exactly the one sent 3 steps ago
            assert held.timestamp == t - 3
        assert ch.latest(0, 0) is None


def test_out_of_order_keeps_newest():
    # messages stamped 3, 5, 4 arriving in that order
    ch = Channel(2, Scripted([0, 0, 0]))
    for t in (3, 5, 4):
        ch.broadcast(msg(0, t), t)
        ch.deliver(5)
    assert ch.latest(1, 0).timestamp == 5


@pytest.mark.parametrize("order", [(0, 1), (1, 0)])
def test_processing_order_does_not_matter(order):
    # both in transit together, delivered in one call
    ch = Channel(2, Scripted([2, 1]))
    stamps = (4, 5)
    for k in order:
        ch.broadcast(msg(0, stamps[k]), stamps[k])
    ch.in_transit.sort(key=lambda x: x[2].timestamp, reverse=order == (1, 0))
    ch.deliver(10)
    assert ch.latest(1, 0).timestamp == 5


def test_infinite_delay_never_delivers():
    ch = Channel(3, DelayModel.infinite())
    for t in range(20):
        for i in range(3):
            ch.broadcast(msg(i, t), t)
        ch.deliver(t)
        _, _, present, _ = ch.buffer_arrays(t, 2, 3)
        assert not present.any()


def test_broadcast_timestamp_must_match():
    ch = Channel(2, DelayModel.fixed(0))
    with pytest.raises(ValueError):
        ch.broadcast(msg(0, 2), 3)


def test_buffer_arrays_layout():
    ch = Channel(3, DelayModel.fixed(1))
    ch.broadcast(msg(2, 0, 7.0), 0)
    ch.deliver(1)
    intents, contents, present, staleness = ch.buffer_arrays(4, 2, 3)
    assert present.tolist() == [[False, False, True], [False, False, True], [False, False, False]]
    assert staleness[0, 2] == 4 and staleness[1, 2] == 4
    np.testing.assert_array_equal(intents[1, 2], [7.0, 7.0])
    np.testing.assert_array_equal(contents[0, 2], [7.0] * 3)
    assert not contents[2].any()


@settings(max_examples=10**4, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 6), st.floats(0, 4))
def test_buffered_timestamps_monotone_under_gaussian(seed, mu, sigma):
    ch = Channel(3, DelayModel.gaussian(mu, sigma), np.random.default_rng(seed))
    last = np.full((3, 3), -1)
    for t in range(15):
        for i in range(3):
            ch.broadcast(msg(i, t), t)
        ch.deliver(t)
        for r in range(3):
            for s in range(3):
                held = ch.latest(r, s)
                stamp = -1 if held is None else held.timestamp
                assert stamp >= last[r, s] and stamp <= t
                last[r, s] = stamp
