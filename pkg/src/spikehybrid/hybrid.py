"""Spike matrix hybridization.

One operand of ``Y = A @ B`` is chosen as the spike matrix.  Its elements
that sit in outlier channels and do not fit the short window ``T_n`` are kept
as integers; everything else is TTFS-encoded.  The IF neuron of each output
integrates ``sum_i W_i t_i`` from the spikes, adds the integer products as
potential, and reads the result out through the silence threshold.

Three matmul executors live here and share one :class:`ExecutionTrace`
format: :func:`hybrid_matmul` (spike + integer), :func:`quantized_matmul`
(the integer-matmul-then-dequantize reference) and :func:`rate_matmul`
(rate-coded spiking of every element, long window for outlier channels).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Literal, Optional

import numpy as np

from .codec import SpikeTrain, decode, encode_rate, encode_ttfs
from .neurons import ThresholdSpec, silence_fire
from .quantizer import QuantParams, QuantTensor

Orientation = Literal["auto", "A", "B"]

# coordinate lists are used while the retained fraction stays below this
DENSE_FALLBACK = 0.25


@dataclass
class ExecutionTrace:
    """Operation and traffic counts of one or more matmuls.

    Every spike reaching ``n`` output neurons costs ``n`` ACC and ``n`` MAC
    (``W_i * t_i``) operations; every retained integer costs ``n`` MACs.
    ``bits_read`` counts synaptic operand bits fetched per operation and
    ``bits_moved`` the spike-side operand bits (1 per spike).
    """

    acc_ops: int = 0
    acc_ops_high: int = 0
    mac_ops_high: int = 0
    mac_ops_low: int = 0
    bits_read: int = 0
    bits_moved: int = 0
    spikes: int = 0
    spikes_high: int = 0
    beta: int = 0
    gamma: int = 0
    T: int = 0
    T_high: int = 0
    neurons: int = 0
    neurons_high: int = 0
    rows: int = 0
    fanout: int = 0
    max_spike_time: int = -1
    b_w: int = 0
    b_a_low: int = 0
    b_a_high: int = 0
    orientation: str = "A"
    matmuls: int = 0
    elements: Optional[list] = field(default=None, repr=False)

    def __add__(self, other: "ExecutionTrace") -> "ExecutionTrace":
        out = ExecutionTrace()
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if f.name == "elements":
                val = None if a is None and b is None else (a or []) + (b or [])
            elif f.name in ("max_spike_time", "T", "T_high", "b_w", "b_a_low", "b_a_high"):
                val = max(a, b)
            elif f.name == "fanout":
                val = a if a == b or not b else (b if not a else -1)
            elif f.name == "orientation":
                val = a if a == b or not other.matmuls else (b if not self.matmuls else "mixed")
            else:
                val = a + b
            setattr(out, f.name, val)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["elements"] is None:
            d.pop("elements")
        return d


@dataclass(frozen=True)
class SelectionReport:
    count_A: int
    count_B: int
    chosen: str
    beta: int
    beta_ratio: float


@dataclass
class HybridSpikeMatrix:
    spike_part: SpikeTrain
    int_rows: np.ndarray
    int_cols: np.ndarray
    int_codes: np.ndarray
    shape: tuple[int, int]
    source_params: tuple[QuantParams, QuantParams]

    @property
    def beta(self) -> int:
        return int(self.int_codes.size)

    @property
    def integer_part(self) -> list[tuple[int, int, int]]:
        return [(int(r), int(c), int(v)) for r, c, v in zip(self.int_rows, self.int_cols, self.int_codes)]

    @property
    def dense_integer(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=np.int64)
        m[self.int_rows, self.int_cols] = self.int_codes
        return m

    def reconstruct(self) -> np.ndarray:
        return decode(self.spike_part).reshape(self.shape) + self.dense_integer


def retained_mask(m: QuantTensor, T_n: int) -> np.ndarray:
    """Elements in outlier channels whose magnitude does not fit ``[0, T_n - 1]``."""
    return m.outlier_mask & (np.abs(m.codes) >= T_n)


def count_retained(m: QuantTensor, T_n: int) -> int:
    return int(retained_mask(m, T_n).sum())


def select_spike_matrix(a: QuantTensor, b: QuantTensor, T_n: int) -> SelectionReport:
    """Pick the operand with fewer retained integers (ties go to ``a``)."""
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not conformable")
    ca, cb = count_retained(a, T_n), count_retained(b, T_n)
    chosen, beta, size = ("A", ca, a.codes.size) if ca <= cb else ("B", cb, b.codes.size)
    return SelectionReport(ca, cb, chosen, beta, beta / size)


def split(m: QuantTensor, T_n: int, scheme: str = "ttfs") -> HybridSpikeMatrix:
    keep = retained_mask(m, T_n)
    spiking = np.where(keep, 0, m.codes)
    encode = encode_ttfs if scheme == "ttfs" else encode_rate
    train = encode(spiking, T=T_n)
    rows, cols = np.nonzero(keep)
    return HybridSpikeMatrix(train, rows, cols, m.codes[rows, cols], m.shape,
                             (m.params_normal, m.params_outlier))


@dataclass
class MatmulResult:
    output: np.ndarray
    V_total: np.ndarray
    trace: ExecutionTrace
    st: Optional[np.ndarray] = None
    truncations: int = 0
    negative_st: int = 0
    selection: Optional[SelectionReport] = None
    output_spikes: Optional[np.ndarray] = None


def _synapse_bits(w: QuantTensor) -> np.ndarray:
    """Bit width of each synapse row (channel along the contraction axis)."""
    return np.where(w.channel_mask, w.params_outlier.bit_width, w.params_normal.bit_width)


def _scale_product(a: QuantTensor, b: QuantTensor) -> np.ndarray:
    s1 = np.asarray(a.params_normal.scale, dtype=np.float64)
    s2 = np.asarray(b.params_normal.scale, dtype=np.float64)
    if s1.ndim == 2 and s1.shape[1] != 1:
        raise ValueError("left operand needs a per-tensor or per-row scale")
    if s2.ndim == 2 and s2.shape[0] != 1:
        raise ValueError("right operand needs a per-tensor or per-column scale")
    return s1 * s2


def _zero_point_correction(V: np.ndarray, a: QuantTensor, b: QuantTensor):
    """Subtract zero-point cross terms; returns corrected V and ACC count."""
    z1, z2 = a.zero_point, b.zero_point
    M, K = a.shape
    N = b.shape[1]
    acc = 0
    if z1:
        V = V - z1 * b.codes.sum(axis=0, keepdims=True)
        acc += K * N + M * N
    if z2:
        V = V - z2 * a.codes.sum(axis=1, keepdims=True)
        acc += M * K + M * N
    if z1 and z2:
        V = V + z1 * z2 * K
        acc += M * N
    return V, acc


def _check_bias(bias, N: int) -> np.ndarray:
    if bias is None:
        return np.zeros((1, N))
    bias = np.asarray(bias, dtype=np.float64)
    if bias.ndim == 0:
        return np.full((1, N), float(bias))
    if bias.shape[-1] != N:
        raise ValueError("bias length does not match output columns")
    return bias.reshape(-1, N) if bias.ndim <= 2 else bias


def _ttfs_accumulate(train: SpikeTrain, shape, W: np.ndarray) -> np.ndarray:
    """Event-driven accumulation of ``a_i(t) W_i t_i`` one timestep at a time."""
    times = train.values.reshape(shape)
    signs = train.signs.reshape(shape)
    V = np.zeros((shape[0], W.shape[1]), dtype=np.int64)
    for t in range(1, train.window_T):
        hit = times == t
        if hit.any():
            V += t * ((hit * signs) @ W)
    return V


def _integer_accumulate(h: HybridSpikeMatrix, W: np.ndarray) -> np.ndarray:
    if h.beta == 0:
        return np.zeros((h.shape[0], W.shape[1]), dtype=np.int64)
    if h.beta > DENSE_FALLBACK * np.prod(h.shape):
        return h.dense_integer @ W
    V = np.zeros((h.shape[0], W.shape[1]), dtype=np.int64)
    np.add.at(V, h.int_rows, h.int_codes[:, None] * W[h.int_cols, :])
    return V


def hybrid_matmul(a: QuantTensor, b: QuantTensor, bias=None, spec: Optional[ThresholdSpec] = None,
                  T_n: Optional[int] = None, orientation: Orientation = "auto",
                  emission: str = "exact", debug: bool = False, attention: bool = False) -> MatmulResult:
    """``Y = IF(A_spike, B) + A_int @ B`` with silence-threshold readout.

    Parameters
    ----------
    a, b : QuantTensor
        ``a`` has channels along its columns and ``b`` along its rows (the
        contraction axis).
    bias : array_like, optional
        Added at fire time, one value per output column.
    spec : ThresholdSpec, optional
        Checked against the operand scales when given.
    T_n : int, optional
        Short window; defaults to ``2 ** b_n`` of the operands.
    orientation : {"auto", "A", "B"}
        Which operand spikes.  ``"auto"`` selects by retained count.
    emission : {"exact", "spike"}
        ``"spike"`` additionally clamps output spike times to the window and
        counts truncations.
    debug : bool
        Record per-output ``(row, col, V_total, st)`` tuples in the trace.
    attention : bool
        Both operands are activations: nothing is read from weight memory
        and the operand traffic is counted twice, once per operand.
    """
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not conformable")
    if T_n is None:
        T_n = 1 << a.params_normal.bit_width
    product = _scale_product(a, b)
    if spec is not None:
        if np.ndim(a.params_normal.scale) or np.ndim(b.params_normal.scale):
            raise ValueError("a scalar ThresholdSpec needs per-tensor scales")
        if spec.product != float(product):
            raise ValueError("threshold spec does not match the operand scales")
    M, K = a.shape
    N = b.shape[1]
    bias = _check_bias(bias, N)

    selection = select_spike_matrix(a, b, T_n)
    chosen = selection.chosen if orientation == "auto" else orientation
    if chosen not in ("A", "B"):
        raise ValueError(f"invalid orientation {orientation!r}")
    spike_op, syn_op = (a, b) if chosen == "A" else (b.transpose(), a.transpose())

    h = split(spike_op, T_n)
    W = syn_op.codes
    V_snn = _ttfs_accumulate(h.spike_part, h.shape, W)
    V_int = _integer_accumulate(h, W)
    V = V_snn + V_int
    if chosen == "B":
        V = V.T
    V, zp_acc = _zero_point_correction(V, a, b)

    out, st = silence_fire(V, product, bias)

    fanout = W.shape[1]
    syn_bits = _synapse_bits(syn_op)
    times = h.spike_part.values.reshape(h.shape)
    fired = times > 0
    spikes = int(fired.sum())
    spikes_per_ch = fired.sum(axis=0)
    int_per_ch = np.bincount(h.int_cols, minlength=h.shape[1])
    moved = (spikes + h.beta * spike_op.params_outlier.bit_width) * fanout
    trace = ExecutionTrace(
        acc_ops=spikes * fanout + zp_acc,
        mac_ops_low=spikes * fanout,
        mac_ops_high=h.beta * fanout,
        bits_read=0 if attention else int(((spikes_per_ch + int_per_ch) * syn_bits).sum()) * fanout,
        bits_moved=2 * moved if attention else moved,
        spikes=spikes,
        beta=h.beta,
        gamma=spike_op.gamma,
        T=T_n,
        neurons=h.spike_part.values.size - h.beta,
        rows=h.shape[0],
        fanout=fanout,
        max_spike_time=h.spike_part.max_spike_time,
        b_w=syn_op.params_normal.bit_width,
        b_a_low=spike_op.params_normal.bit_width,
        b_a_high=spike_op.params_outlier.bit_width,
        orientation=chosen,
        matmuls=1,
    )
    truncations = 0
    if emission == "spike":
        truncations = int(((st < 0) | (st > T_n - 1)).sum())
    elif emission != "exact":
        raise ValueError(f"unknown emission mode {emission!r}")
    if debug:
        trace.elements = [(i, j, int(V[i, j]), int(st[i, j])) for i in range(M) for j in range(N)]
    return MatmulResult(out, V, trace, st, truncations, int((st < 0).sum()), selection)


def quantized_matmul(a: QuantTensor, b: QuantTensor, bias=None, attention: bool = False) -> MatmulResult:
    """Integer matmul then dequantize: ``S1 * S2 * (q_a @ q_b) + bias``.

    This is the reference the spiking executors are checked against.  The
    trace prices a MAC as high precision when either operand's channel is an
    outlier channel.  With ``attention`` the left operand's traffic is counted
    for both operands and no weight reads are charged.
    """
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not conformable")
    M, K = a.shape
    N = b.shape[1]
    bias = _check_bias(bias, N)
    V = a.codes @ b.codes
    V, zp_acc = _zero_point_correction(V, a, b)
    out = _scale_product(a, b) * V.astype(np.float64) + bias

    high_ch = a.channel_mask | b.channel_mask
    n_high = int(high_ch.sum())
    a_bits = np.where(a.channel_mask, a.params_outlier.bit_width, a.params_normal.bit_width)
    b_bits = _synapse_bits(b)
    trace = ExecutionTrace(
        acc_ops=zp_acc,
        mac_ops_high=M * n_high * N,
        mac_ops_low=M * (K - n_high) * N,
        bits_read=0 if attention else int(b_bits.sum()) * M * N,
        bits_moved=(2 if attention else 1) * int(a_bits.sum()) * M * N,
        gamma=a.gamma,
        rows=M,
        fanout=N,
        b_w=b.params_normal.bit_width,
        b_a_low=a.params_normal.bit_width,
        b_a_high=a.params_outlier.bit_width,
        matmuls=1,
    )
    return MatmulResult(out, V, trace)


def _rate_if_counts(I_steps: list, product: np.ndarray, shape) -> np.ndarray:
    """Output spike counts of rate-coded IF neurons driven by integer inputs.

    The neuron fires at a step when its cumulative input ``A`` satisfies
    ``A * S1 * S2 >= n + 1`` (``n`` spikes so far), i.e. ``V >= V_th`` with
    ``V = A - n V_th``; the test runs on exact integers.
    """
    prod = np.broadcast_to(product, shape)
    ratios = {}
    num = np.empty(shape, dtype=object)
    den = np.empty(shape, dtype=object)
    for idx in np.ndindex(shape):
        p = float(prod[idx])
        r = ratios.get(p) or ratios.setdefault(p, p.as_integer_ratio())
        num[idx], den[idx] = r
    A = np.zeros(shape, dtype=object)
    n = np.zeros(shape, dtype=object)
    for I in I_steps:
        if I is not None:
            A = A + I.astype(object)
        fire = A * num >= (n + 1) * den
        n = n + fire.astype(object)
    return n.astype(np.int64)


def rate_matmul(a: QuantTensor, b: QuantTensor, bias=None, T_n: Optional[int] = None,
                T_o: Optional[int] = None, simulate: bool = True) -> MatmulResult:
    """Rate-coded spiking of every element of ``a``.

    Normal channels spike within ``T_n`` and outlier channels within ``T_o``,
    so the neuron window is ``T_o``.  Output neurons run rate-coded IF with
    ``V_th = 1 / (S1 * S2)``; the spike count plus the final residual
    reproduces the reference value, which is what is returned.
    """
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shapes {a.shape} and {b.shape} are not conformable")
    if T_n is None:
        T_n = 1 << a.params_normal.bit_width
    if T_o is None:
        T_o = 1 << a.params_outlier.bit_width
    M, K = a.shape
    N = b.shape[1]
    bias = _check_bias(bias, N)
    product = _scale_product(a, b)
    high = a.outlier_mask
    codes = a.codes
    train_low = encode_rate(np.where(high, 0, codes), T=T_n)
    train_high = encode_rate(np.where(high, codes, 0), T=T_o)
    counts = np.abs(codes)
    signs = np.where(codes < 0, -1, 1)
    W = b.codes

    I_steps = []
    V = np.zeros((M, N), dtype=np.int64)
    for t in range(T_o):
        hit = counts > t
        if hit.any():
            I = (hit * signs) @ W
            V += I
            I_steps.append(I)
        else:
            I_steps.append(None)
    V, zp_acc = _zero_point_correction(V, a, b)
    out, st = silence_fire(V, product, bias)
    out_spikes = _rate_if_counts(I_steps, product, (M, N)) if simulate else None

    spikes_low = train_low.total_spikes
    spikes_high = train_high.total_spikes
    syn_bits = _synapse_bits(b)
    per_ch = counts.sum(axis=0)
    trace = ExecutionTrace(
        acc_ops=spikes_low * N + zp_acc,
        acc_ops_high=spikes_high * N,
        mac_ops_low=spikes_low * N,
        mac_ops_high=spikes_high * N,
        bits_read=int((per_ch * syn_bits).sum()) * N,
        bits_moved=(spikes_low + spikes_high) * N,
        spikes=spikes_low,
        spikes_high=spikes_high,
        gamma=a.gamma,
        T=T_n,
        T_high=T_o,
        neurons=int((~high).sum()),
        neurons_high=int(high.sum()),
        rows=M,
        fanout=N,
        max_spike_time=max(train_low.max_spike_time, train_high.max_spike_time),
        b_w=b.params_normal.bit_width,
        b_a_low=a.params_normal.bit_width,
        b_a_high=a.params_outlier.bit_width,
        matmuls=1,
    )
    return MatmulResult(out, V, trace, st, output_spikes=out_spikes)
