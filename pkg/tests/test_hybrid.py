import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikehybrid.codec import decode
from spikehybrid.hybrid import (ExecutionTrace, count_retained, hybrid_matmul, quantized_matmul,
                                rate_matmul, select_spike_matrix, split)
from spikehybrid.neurons import ThresholdSpec
from spikehybrid.quantizer import QuantParams, QuantTensor, dequantize, quantize


def qt(codes, scale=1.0, outliers=(), axis="column", b_n=4, b_o=8, signed_outlier=True):
    return QuantTensor(np.asarray(codes), QuantParams(scale, 0, b_n, True),
                       QuantParams(scale, 0, b_o, signed_outlier), frozenset(outliers), axis)


def random_pair(rng, M=8, K=8, N=8, gamma_a=2, gamma_b=2, mode="symmetric"):
    x = rng.standard_normal((M, K))
    ia = rng.choice(K, gamma_a, replace=False)
    x[:, ia] *= 20
    w = rng.standard_normal((K, N)) / np.sqrt(K)
    ib = rng.choice(K, gamma_b, replace=False)
    w[ib, :] *= 20
    a = quantize(x, "column", 4, 8, mode, outlier_channels=ia)
    b = quantize(w, "row", 4, 8, "symmetric", scale_axis=1, outlier_channels=ib)
    return a, b


def oracle(a, b, bias):
    """Python-int dot products, then one float multiply by S1*S2 and the bias."""
    za, zb = a.zero_point, b.zero_point
    A = [[int(v) - za for v in row] for row in a.codes]
    B = [[int(v) - zb for v in row] for row in b.codes]
    s = np.broadcast_to(a.scale * b.scale, (a.shape[0], b.shape[1]))
    out = np.empty((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            V = sum(A[i][k] * B[k][j] for k in range(a.shape[1]))
            out[i, j] = float(s[i, j]) * float(V) + bias[j]
    return out


def test_no_outlier_channels_retains_nothing():
    assert count_retained(qt([[20, 3, 100]]), 16) == 0


def test_count_retained_example():
    m = qt([[20], [3], [200]], outliers={0}, signed_outlier=False)
    assert count_retained(m, 16) == 2


def test_split_example():
    m = qt([[20], [3], [200]], outliers={0}, signed_outlier=False)
    h = split(m, 16)
    assert sorted(v for _, _, v in h.integer_part) == [20, 200]
    assert decode(h.spike_part).ravel().tolist() == [0, 3, 0]
    assert np.array_equal(h.reconstruct(), m.codes)


def test_split_without_large_codes_has_no_integer_part():
    h = split(qt([[1, -15], [7, 0]], outliers={1}), 16)
    assert h.integer_part == []


def test_selection_examples():
    a = qt([[20, 1], [30, 1]], outliers={0})  # C(A) = 2
    b = qt([[20, 30, 40, 50, 60], [1, 1, 1, 1, 1]], outliers={0}, axis="row")  # C(B) = 5
    r = select_spike_matrix(a, b, 16)
    assert (r.count_A, r.count_B, r.chosen, r.beta) == (2, 5, "A", 2)
    r = select_spike_matrix(qt([[1, 2]]), qt([[1], [2]], axis="row"), 16)
    assert r.chosen == "A" and r.beta == 0
    with pytest.raises(ValueError):
        select_spike_matrix(qt([[1, 2]]), qt([[1, 2]], axis="row"), 16)


def _recount(m, T_n):
    n = 0
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            ch = j if m.axis == "column" else i
            n += ch in m.outlier_channels and abs(int(m.codes[i, j])) >= T_n
    return n


@given(st.integers(0, 10**6))
def test_selection_minimizes_recount(seed):
    a, b = random_pair(np.random.default_rng(seed), 4, 6, 5)
    r = select_spike_matrix(a, b, 16)
    ca, cb = _recount(a, 16), _recount(b, 16)
    assert (r.count_A, r.count_B) == (ca, cb)
    assert r.beta == min(ca, cb)
    assert r.chosen == ("A" if ca <= cb else "B")


def test_split_reconstructs_1000_tensors():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        shape = tuple(rng.integers(1, 7, 2))
        codes = rng.integers(-128, 128, shape)
        outl = {c for c in range(shape[1]) if rng.random() < 0.3}
        codes[:, [c for c in range(shape[1]) if c not in outl]] %= 8
        m = qt(codes, outliers=outl)
        h = split(m, 16)
        assert np.array_equal(h.reconstruct(), m.codes)
        assert np.all(np.abs(decode(h.spike_part)) < 16)
        assert all(c in outl and abs(v) >= 16 for _, c, v in h.integer_part)


def test_two_element_example():
    a = qt([[5, 3]], 0.5)
    b = qt([[2], [-1]], 0.5, axis="row")
    r = hybrid_matmul(a, b, spec=ThresholdSpec(0.5, 0.5), T_n=16)
    assert int(r.V_total[0, 0]) == 7
    assert r.output[0, 0] == 1.75


def test_spec_and_shape_mismatch_errors():
    a = qt([[5, 3]], 0.5)
    b = qt([[2], [-1]], 0.5, axis="row")
    with pytest.raises(ValueError):
        hybrid_matmul(a, b, spec=ThresholdSpec(0.5, 0.25))
    with pytest.raises(ValueError):
        hybrid_matmul(a, qt([[2, 1, 1]], axis="row"))


def test_identity_row_selects_b_entries():
    rng = np.random.default_rng(5)
    b = quantize(rng.standard_normal((6, 4)), "row", scale_axis=1, outlier_channels=())
    for k in range(6):
        row = np.zeros((1, 6), dtype=np.int64)
        row[0, k] = 1
        r = hybrid_matmul(qt(row), b)
        assert np.array_equal(r.output[0], dequantize(b)[k])


def test_random_8x8_bit_exact_500_trials():
    rng = np.random.default_rng(2024)
    for trial in range(500):
        a, b = random_pair(rng)
        bias = rng.standard_normal(8)
        ref = oracle(a, b, bias)
        r = hybrid_matmul(a, b, bias, T_n=16)
        assert np.array_equal(r.output, ref), trial
        assert np.array_equal(quantized_matmul(a, b, bias).output, ref)
        assert np.array_equal(r.V_total, a.codes @ b.codes)
        assert r.trace.max_spike_time <= 15


def test_asymmetric_activation_zero_point_correction():
    rng = np.random.default_rng(9)
    for _ in range(50):
        a, b = random_pair(rng, 5, 7, 3, mode="asymmetric")
        assert a.zero_point != 0
        bias = rng.standard_normal(3)
        r = hybrid_matmul(a, b, bias)
        assert np.array_equal(r.output, oracle(a, b, bias))
        assert r.trace.acc_ops > r.trace.spikes * r.trace.fanout


@given(st.integers(0, 10**6), st.sampled_from(["A", "B", "auto"]))
def test_orientations_agree(seed, orientation):
    rng = np.random.default_rng(seed)
    a, b = random_pair(rng, 6, 7, 6)
    r = hybrid_matmul(a, b, orientation=orientation)
    assert np.array_equal(r.output, quantized_matmul(a, b).output)
    assert r.trace.orientation == (r.selection.chosen if orientation == "auto" else orientation)


@given(st.integers(0, 10**6))
def test_chosen_orientation_minimizes_integer_macs(seed):
    a, b = random_pair(np.random.default_rng(seed), 6, 8, 6)
    rA = hybrid_matmul(a, b, orientation="A").trace
    rB = hybrid_matmul(a, b, orientation="B").trace
    chosen = hybrid_matmul(a, b).trace
    assert chosen.mac_ops_high == min(rA.mac_ops_high, rB.mac_ops_high)


def test_spike_emission_counts_truncations():
    a = qt([[15, 15]], 1.0)
    b = qt([[1], [1]], 1.0, axis="row")
    r = hybrid_matmul(a, b, emission="spike")
    assert r.truncations == 1 and r.output[0, 0] == 30.0
    assert hybrid_matmul(a, b).truncations == 0
    neg = hybrid_matmul(qt([[-3]], 1.0), qt([[1]], 1.0, axis="row"))
    assert neg.negative_st == 1 and neg.output[0, 0] == -3.0


def test_debug_trace_elements():
    a, b = random_pair(np.random.default_rng(1), 2, 3, 2, 1, 1)
    r = hybrid_matmul(a, b, debug=True)
    assert [(i, j) for i, j, _, _ in r.trace.elements] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert [v for _, _, v, _ in r.trace.elements] == r.V_total.ravel().tolist()


def test_trace_counts_small_case():
    a = qt([[5, 0, 20]], 1.0, outliers={2})
    b = qt([[1, 2], [3, 4], [5, 6]], 1.0, axis="row")
    t = hybrid_matmul(a, b, orientation="A").trace
    assert (t.spikes, t.beta, t.fanout) == (1, 1, 2)
    assert (t.acc_ops, t.mac_ops_low, t.mac_ops_high) == (2, 2, 2)
    assert t.bits_read == (1 + 1) * 4 * 2
    assert t.bits_moved == (1 + 8) * 2
    assert t.max_spike_time == 5


def test_trace_json_and_sum():
    a, b = random_pair(np.random.default_rng(3), 3, 4, 5, 1, 1)
    t = hybrid_matmul(a, b).trace
    d = json.loads(json.dumps(t.to_dict()))
    for k in ("acc_ops", "mac_ops_high", "mac_ops_low", "bits_read", "bits_moved", "spikes", "beta", "gamma", "T"):
        assert k in d
    s = t + t
    assert s.acc_ops == 2 * t.acc_ops and s.max_spike_time == t.max_spike_time and s.matmuls == 2
    assert ExecutionTrace(**d) == t


def test_rate_matmul_matches_reference_and_uses_long_window():
    rng = np.random.default_rng(8)
    a, b = random_pair(rng, 4, 6, 3)
    bias = rng.standard_normal(3)
    r = rate_matmul(a, b, bias, 16, 256)
    assert np.array_equal(r.output, quantized_matmul(a, b, bias).output)
    assert r.trace.T_high == 256
    assert r.trace.max_spike_time == int(np.abs(a.codes).max()) - 1
    assert r.trace.spikes + r.trace.spikes_high == int(np.abs(a.codes).sum())


def test_rate_matmul_output_spikes_follow_floor_law():
    a = qt([[3, 2, 1]], 1.0)
    b = qt([[1], [1], [1]], 0.125, axis="row")  # V_th = 8 > per-step input 3
    r = rate_matmul(a, b, T_n=16, T_o=256)
    assert int(r.output_spikes[0, 0]) == 6 // 8 == int(r.st[0, 0])
    b = qt([[4], [4], [4]], 0.25, axis="row")  # V_th = 4, total 24
    r = rate_matmul(a, b, T_n=16, T_o=256)
    # input arrives over 3 steps, the idle rest of the 256-step window drains it
    assert int(r.output_spikes[0, 0]) == 6 == int(r.st[0, 0])
