from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spikehybrid.quantizer import (MadConfig, QuantParams, QuantTensor, dequantize,
                                   detect_outlier_channels, mad_fence_outliers, quantize,
                                   quantize_value, round_half_away)
from spikehybrid.pipeline import synthetic_activations

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
matrices = st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(
    lambda s: arrays(np.float64, s, elements=finite))


def test_fig1_scale_example():
    # 7.1 / 1.42 = 5
    assert quantize_value(7.1, 1.42, 0, 4, signed=True) == 5


def test_zero_maps_to_zero_point():
    assert quantize_value(0.0, 0.3, 0, 4) == 0
    assert quantize_value(0.0, 0.3, 7, 4, signed=False) == 7


def test_clamps_to_unsigned_max():
    for b in (2, 4, 8):
        assert quantize_value(1e9, 1.0, 0, b, signed=False) == 2 ** b - 1
        assert quantize_value(-1e9, 1.0, 0, b, signed=True) == -(2 ** (b - 1))


def test_dequantize_fig1():
    q = QuantTensor(np.array([[5, 0]]), QuantParams(1.42, 0, 4, True), QuantParams(1.42, 0, 8, True))
    out = dequantize(q)
    assert out[0, 0] == pytest.approx(7.10)
    assert out[0, 1] == 0.0


def test_round_half_away_from_zero():
    x = np.array([0.5, 1.5, 2.5, -0.5, -1.5, -2.5, 0.49, -0.49])
    assert round_half_away(x).tolist() == [1, 2, 3, -1, -2, -3, 0, 0]


def test_mad_zero_fallback_flags_strict_max():
    mask = mad_fence_outliers([1, 1, 1, 1, 100], MadConfig(threshold_k=3))
    assert np.flatnonzero(mask).tolist() == [4]


def test_max_statistic_channel_example():
    x = np.ones((3, 5))
    x[:, 4] = 100
    assert detect_outlier_channels(x, "column", MadConfig(statistic="max")) == {4}
    assert detect_outlier_channels(x, "column") == {4}


def test_identical_channels_give_empty_set():
    x = np.tile(np.array([[0.3, -1.2, 2.0]]).T, (1, 6))
    assert detect_outlier_channels(x, "column") == frozenset()
    assert detect_outlier_channels(x, "column", MadConfig(statistic="max")) == frozenset()


def test_empty_input_errors():
    with pytest.raises(ValueError, match="empty input"):
        detect_outlier_channels(np.zeros((0, 3)))
    with pytest.raises(ValueError, match="empty input"):
        mad_fence_outliers([])


def test_injected_channels_recovered_exactly():
    x, idx = synthetic_activations(64, 4096, 110, 20.0, seed=0)
    assert detect_outlier_channels(x, "column") == frozenset(idx.tolist())


def test_row_axis_matches_transposed_column():
    x, _ = synthetic_activations(16, 64, 3, 20.0, seed=2)
    assert detect_outlier_channels(x.T, "row") == detect_outlier_channels(x, "column")


def test_quantize_errors():
    with pytest.raises(ValueError):
        quantize(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        quantize(np.array([[np.inf, 1.0]]))
    with pytest.raises(ValueError):
        quantize(np.ones((2, 2)), b_n=8, b_o=4)
    with pytest.raises(ValueError):
        MadConfig(threshold_k=0)


def test_outlier_channels_get_wide_range():
    x, idx = synthetic_activations(8, 64, 2, 20.0, seed=1)
    q = quantize(x)
    q.check()
    assert q.outlier_channels == frozenset(idx.tolist())
    normal = ~q.outlier_mask
    assert np.abs(q.codes[normal]).max() <= 7
    assert np.abs(q.codes[q.outlier_mask]).max() > 7
    assert q.params_normal.bit_width == 4 and q.params_outlier.bit_width == 8


def test_asymmetric_zero_point_and_range():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.5, 3.0, (6, 6))
    x[0, 0] = -1.0
    q = quantize(x, mode="asymmetric", outlier_channels=())
    assert q.params_normal.signed is False
    assert 0 <= q.codes.min() and q.codes.max() <= 15
    assert np.max(np.abs(dequantize(q) - x)) <= q.params_normal.scale / 2 + 1e-12


def test_per_column_scales():
    rng = np.random.default_rng(4)
    w = rng.standard_normal((8, 5)) * np.arange(1, 6)
    q = quantize(w, "row", scale_axis=1, outlier_channels=())
    assert q.scale.shape == (1, 5)
    assert np.all(np.abs(q.codes).max(axis=0) == 7)


@given(matrices)
def test_roundtrip_error_within_half_scale(x):
    q = quantize(x, outlier_channels=())
    err = np.abs(dequantize(q) - x)
    # exact comparison through rationals to avoid fp slack in the bound itself
    s = Fraction(q.params_normal.scale)
    for e, xv, code in zip(err.ravel(), x.ravel(), q.codes.ravel()):
        assert abs(Fraction(float(xv)) - s * int(code)) <= s / 2


@given(matrices)
def test_codes_fit_their_group(x):
    quantize(x).check()


@given(arrays(np.float64, (6, 1), elements=finite))
def test_monotone_within_channel(col):
    x = np.hstack([col, col])
    q = quantize(x, outlier_channels=())
    order = np.argsort(col[:, 0], kind="stable")
    assert np.all(np.diff(q.codes[order, 0]) >= 0)


@given(st.integers(0, 50), st.floats(1e-3, 1e3))
def test_detection_scale_equivariant(seed, c):
    x, _ = synthetic_activations(8, 32, 2, 20.0, seed=seed)
    assert detect_outlier_channels(x * c) == detect_outlier_channels(x)


@given(st.integers(0, 50), st.floats(0.5, 6.0), st.floats(0.5, 6.0))
def test_gamma_nonincreasing_in_k(seed, k1, k2):
    lo, hi = sorted((k1, k2))
    x, _ = synthetic_activations(8, 32, 3, 4.0, seed=seed)
    for stat in ("majority", "max"):
        g_lo = len(detect_outlier_channels(x, cfg=MadConfig(threshold_k=lo, statistic=stat)))
        g_hi = len(detect_outlier_channels(x, cfg=MadConfig(threshold_k=hi, statistic=stat)))
        assert g_hi <= g_lo
