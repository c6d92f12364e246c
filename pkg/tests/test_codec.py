import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikehybrid.codec import SpikeTrain, decode, encode_rate, encode_ttfs, measure_rates


def test_ttfs_single_spike_at_code():
    tr = encode_ttfs([5], T=16)
    assert tr.spike_times(0) == [5]


def test_ttfs_zero_is_silent():
    tr = encode_ttfs([0], T=16)
    assert tr.spike_times(0) == []
    assert tr.total_spikes == 0


def test_ttfs_rejects_code_outside_window():
    with pytest.raises(ValueError, match="exceeds time window"):
        encode_ttfs([200], T=16)
    with pytest.raises(ValueError, match="exceeds time window"):
        encode_ttfs([16], T=16)


def test_rate_spikes_packed_from_zero():
    tr = encode_rate([3], T=16)
    assert tr.spike_times(0) == [0, 1, 2]
    assert tr.spike_counts.tolist() == [3]


def test_rate_zero_and_full_window():
    assert encode_rate([0], T=16).spike_times(0) == []
    full = encode_rate([16], T=16)
    assert full.spike_times(0) == list(range(16))
    assert decode(full).tolist() == [16]
    with pytest.raises(ValueError):
        encode_rate([17], T=16)


def test_decode_examples():
    assert decode(encode_ttfs([5], [1], T=16)).tolist() == [5]
    assert decode(encode_ttfs([0], T=16)).tolist() == [0]
    assert decode(encode_rate([3], [-1], T=16)).tolist() == [-3]


def test_rate_stats_examples():
    assert measure_rates(encode_ttfs([1, 2, 15], T=16)).mean_rate == 1 / 16
    assert measure_rates(encode_ttfs([0, 0], T=16)).mean_rate == 0
    s = measure_rates(encode_rate([1, 2, 3], T=16))
    assert s.mean_rate == 6 / 48 == 0.125
    assert s.fired_fraction == 1.0


def test_empty_train_errors():
    with pytest.raises(ValueError, match="empty"):
        measure_rates(encode_ttfs([], T=4))


def test_spike_train_json_shape():
    tr = encode_ttfs([3, 0, -2], T=4)
    d = json.loads(json.dumps(tr.to_dict()))
    assert d == {"T": 4, "scheme": "ttfs", "neurons": [
        {"times": [3], "sign": 1}, {"times": [], "sign": 1}, {"times": [2], "sign": -1}]}
    back = SpikeTrain.from_dict(d)
    assert decode(back).tolist() == [3, 0, -2]


def test_from_dict_rejects_bad_trains():
    with pytest.raises(ValueError):
        SpikeTrain.from_dict({"T": 4, "scheme": "ttfs", "neurons": [{"times": [1, 2], "sign": 1}]})
    with pytest.raises(ValueError):
        SpikeTrain.from_dict({"T": 4, "scheme": "rate", "neurons": [{"times": [1, 2], "sign": 1}]})
    with pytest.raises(ValueError):
        SpikeTrain.from_dict({"T": 4, "scheme": "ttfs", "neurons": [{"times": [4], "sign": 1}]})


@st.composite
def codes_and_window(draw, rate=False):
    b = draw(st.integers(1, 8))
    T = 1 << b
    hi = T if rate else T - 1
    codes = draw(st.lists(st.integers(-hi, hi), min_size=1, max_size=40))
    return np.array(codes), T


@given(codes_and_window())
def test_ttfs_roundtrip_and_laws(ct):
    codes, T = ct
    tr = encode_ttfs(codes, T=T)
    assert np.array_equal(decode(tr), codes)
    assert set(tr.spike_counts.tolist()) <= {0, 1}
    assert measure_rates(tr).mean_rate <= 1 / T
    assert tr.max_spike_time < T


@given(codes_and_window(rate=True))
def test_rate_roundtrip_and_rate_law(ct):
    codes, T = ct
    tr = encode_rate(codes, T=T)
    assert np.array_equal(decode(tr), codes)
    assert measure_rates(tr).mean_rate == np.abs(codes).sum() / (codes.size * T)
    assert tr.max_spike_time < T
