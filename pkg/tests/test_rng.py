import numpy as np
from hypothesis import given, settings, strategies as st

from jamnet import rng

seeds = st.integers(min_value=0, max_value=2**64 - 1)
small = st.integers(min_value=0, max_value=2**40)


@given(seeds, st.integers(0, 4), small, small)
@settings(max_examples=200, deadline=None)
def test_scalar_matches_grid(seed, stream, row, col):
    assert rng.uniform(seed, stream, row, col) == rng.uniform_grid(seed, stream, [row], [col])[0, 0]


def test_values_in_unit_interval_and_roughly_uniform():
    u = rng.uniform_grid(7, rng.ACTION, np.arange(2000), np.arange(50))
    assert u.min() >= 0.0 and u.max() < 1.0
    # mean of 1e5 uniforms: sd ~ 0.0009
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1 / 12) < 0.002


def test_streams_are_distinct():
    a = rng.uniform_grid(3, rng.CHANNEL, np.arange(100), np.arange(4))
    b = rng.uniform_grid(3, rng.ACTION, np.arange(100), np.arange(4))
    assert not np.array_equal(a, b)


def test_order_of_requests_does_not_matter():
    whole = rng.uniform_grid(11, rng.CHANNEL, np.arange(10, 20), np.arange(3))
    part = rng.uniform_grid(11, rng.CHANNEL, np.arange(15, 20), np.arange(3))
    assert np.array_equal(whole[5:], part)


def test_derive_seed_is_stable_and_spreads():
    assert rng.derive_seed(5, 1, 2) == rng.derive_seed(5, 1, 2)
    children = {rng.derive_seed(5, k) for k in range(1000)}
    assert len(children) == 1000
    assert all(0 <= c < 2**63 for c in children)


def test_slot_stream_uses_slot_and_node():
    s = rng.SlotStream(9, slot=4, node=2)
    assert s.uniform(rng.CHANNEL) == rng.uniform(9, rng.CHANNEL, 4, 2)
    assert "slot=4" in repr(s)
