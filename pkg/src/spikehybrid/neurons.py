"""Integrate-and-fire dynamics: rate-coded IF, classic single-spike TTFS IF,
and the silence-threshold IF whose readout reproduces the dequantized output.

Accumulators are Python/numpy integers.  Thresholds derived from quantization
scales are handled as exact rationals: ``S1 * S2`` is a binary float, so
``V_th = 1 / (S1 * S2)`` equals ``den / num`` for the integer ratio of that
float and every comparison against it can be done in integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Optional

import math

import numpy as np

from .codec import SpikeTrain

Emission = Literal["exact", "spike"]


@dataclass(frozen=True)
class ThresholdSpec:
    """Firing threshold ``V_th = S_th = 1 / (S1 * S2)``."""

    s1: float
    s2: float

    def __post_init__(self):
        for s in (self.s1, self.s2):
            if not math.isfinite(s) or s <= 0:
                raise ValueError("scales must be finite and positive")
        if not math.isfinite(self.product) or self.product == 0:
            raise ValueError("scale product is not representable")

    @property
    def product(self) -> float:
        return self.s1 * self.s2

    @property
    def V_th(self) -> Fraction:
        return 1 / Fraction(self.product)

    @property
    def S_th(self) -> Fraction:
        return self.V_th

    @property
    def ratio(self) -> tuple[int, int]:
        """``(num, den)`` with ``S1 * S2 == num / den`` exactly."""
        return self.product.as_integer_ratio()


@dataclass(frozen=True)
class IFResult:
    output_value: float
    silence_count_st: int
    residual_V_rest: Fraction
    output_spike_time: int
    V_total: int
    truncated: bool = False

    @property
    def negative(self) -> bool:
        return self.silence_count_st < 0

    def to_dict(self) -> dict:
        return {
            "output_value": self.output_value,
            "st": self.silence_count_st,
            "V_rest": str(self.residual_V_rest),
            "output_spike_time": self.output_spike_time,
            "V_total": self.V_total,
            "truncated": self.truncated,
        }


def _check_lengths(train: SpikeTrain, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.int64)
    if w.shape != train.values.shape:
        raise ValueError(f"weights length {w.size} does not match {len(train)} neurons")
    return w


def accumulate_potential(train: SpikeTrain, weights, by_timestep: bool = False) -> int:
    """``V(T) = sum_i sign_i * W_i * t_i`` over fired TTFS neurons."""
    if train.scheme != "ttfs":
        raise ValueError("accumulate_potential needs a ttfs train")
    w = _check_lengths(train, weights)
    if not by_timestep:
        fired = train.values > 0
        return int(sum(int(s) * int(x) * int(t) for s, x, t in
                       zip(train.signs[fired], w[fired], train.values[fired])))
    V = 0
    for t in range(train.window_T):
        a = train.spikes_at(t)
        if a.any():
            V += t * int((train.signs[a] * w[a]).sum())
    return V


def if_silence_run(V_total: int, spec: ThresholdSpec, bias: float = 0.0,
                   emission: Emission = "exact", T: Optional[int] = None) -> IFResult:
    """Silence-threshold readout of an accumulated potential.

    ``st = floor(V_total / S_th)`` (toward minus infinity) and
    ``V_rest = V_total - st * S_th``; the output is ``st + V_rest / S_th + bias``
    evaluated exactly, which is ``S1 * S2 * V_total + bias`` rounded once.

    In ``"spike"`` emission mode the reported spike time is clamped to
    ``T - 1`` and ``truncated`` records whether clamping happened; the output
    value is unaffected.
    """
    if not math.isfinite(bias):
        raise ValueError("bias must be finite")
    V_total = int(V_total)
    num, den = spec.ratio
    st = (V_total * num) // den
    V_rest = Fraction(V_total * num - st * den, num)
    exact = st + V_rest / spec.S_th
    value = float(exact) + bias
    spike_time = st
    truncated = False
    if emission == "spike":
        if T is None:
            raise ValueError("spike emission needs the window T")
        clipped = min(max(st, 0), T - 1)
        truncated = clipped != st
        spike_time = clipped
    elif emission != "exact":
        raise ValueError(f"unknown emission mode {emission!r}")
    return IFResult(value, st, V_rest, spike_time, V_total, truncated)


def silence_fire(V_total: np.ndarray, product: np.ndarray, bias=0.0):
    """Vectorized :func:`if_silence_run` for a matrix of potentials.

    ``product`` broadcasts against ``V_total`` (per-tensor or per-column
    ``S1 * S2``).  Returns ``(values, st)`` with ``st`` as int64.
    """
    V = np.asarray(V_total, dtype=np.int64)
    prod = np.broadcast_to(np.asarray(product, dtype=np.float64), V.shape)
    values = np.empty(V.shape, dtype=np.float64)
    st = np.empty(V.shape, dtype=np.int64)
    cache: dict[float, tuple[int, int]] = {}
    for idx in np.ndindex(V.shape):
        p = float(prod[idx])
        ratio = cache.get(p)
        if ratio is None:
            ratio = cache[p] = p.as_integer_ratio()
        num, den = ratio
        scaled = int(V[idx]) * num
        s = scaled // den
        st[idx] = s
        # s + (scaled - s*den)/den == scaled/den, correctly rounded by int division
        values[idx] = scaled / den
    return values + np.asarray(bias, dtype=np.float64), st


@dataclass(frozen=True)
class RateIFResult:
    spike_count: int
    residual_V: Fraction
    spike_times: tuple[int, ...]


def if_rate_run(train: SpikeTrain, weights, V_th, drain: bool = False) -> RateIFResult:
    """Step a rate-coded IF neuron over the window.

    ``V(t) = V(t-1) + I(t) - s(t) V_th`` with at most one output spike per
    step.  ``V_th`` may be any real; it is converted to an exact fraction.

    Within ``T`` steps the count equals ``floor(sum_i W_i N_i / V_th)`` only
    while no step's input exceeds ``V_th``; a larger input leaves a backlog.
    ``drain=True`` keeps stepping on zero input after the window until the
    potential drops below threshold, which makes the floor law exact for any
    nonnegative input (spike times may then reach past ``T - 1``).
    """
    if train.scheme != "rate":
        raise ValueError("if_rate_run needs a rate train")
    w = _check_lengths(train, weights)
    vth = Fraction(V_th)
    if vth <= 0:
        raise ValueError("V_th must be positive")
    V = Fraction(0)
    times = []
    for t in range(train.window_T):
        a = train.spikes_at(t)
        I = int((train.signs[a] * w[a]).sum()) if a.any() else 0
        V += I
        if V >= vth:
            V -= vth
            times.append(t)
    t = train.window_T
    while drain and V >= vth:
        V -= vth
        times.append(t)
        t += 1
    return RateIFResult(len(times), V, tuple(times))


@dataclass(frozen=True)
class RateBatchResult:
    spikes: np.ndarray  # total output spikes (including the drain phase)
    spikes_in_window: np.ndarray  # output spikes at t < T
    residual: np.ndarray  # final potential times ``V_th.denominator``


def if_rate_batch(counts, W, V_th, T: int, drain: bool = False) -> RateBatchResult:
    """Rate-coded IF for many neurons at once.

    ``counts`` is ``(P, n)`` nonnegative spike counts (spikes packed from
    ``t = 0``) and ``W`` is ``(n, Q)`` integer weights; output ``[p, q]`` is
    the neuron driven by input row ``p`` through weight column ``q``.  Same
    dynamics as :func:`if_rate_run`, in scaled integers.
    """
    counts = np.asarray(counts, dtype=np.int64)
    W = np.asarray(W, dtype=np.int64)
    if counts.ndim != 2 or W.ndim != 2 or counts.shape[1] != W.shape[0]:
        raise ValueError("counts must be (P, n) and W (n, Q)")
    if np.any(counts < 0) or np.any(counts > T):
        raise ValueError("spike counts must lie in [0, T]")
    vth = Fraction(V_th)
    if vth <= 0:
        raise ValueError("V_th must be positive")
    num, den = vth.numerator, vth.denominator
    bound = den * int(np.abs(W).sum(axis=0).max(initial=0)) * T + num * (T + 1)
    dtype = np.int64 if bound < 2 ** 62 else object
    V = np.zeros((counts.shape[0], W.shape[1]), dtype=dtype)  # den * potential
    n = np.zeros(V.shape, dtype=np.int64)
    Wd = (W * den).astype(dtype)
    for t in range(T):
        V += ((counts > t).astype(dtype)) @ Wd
        fire = V >= num
        V -= fire * num
        n += fire
    in_window = n.copy()
    if drain:
        flat_V, flat_n = V.reshape(-1), n.reshape(-1)
        active = np.flatnonzero(flat_V >= num)
        while active.size:
            flat_V[active] -= num
            flat_n[active] += 1
            active = active[flat_V[active] >= num]
    return RateBatchResult(n, in_window, V)


@dataclass(frozen=True)
class ClassicTTFSResult:
    spike_time: Optional[int]
    potential_at_fire: int
    discarded_potential: int

    @property
    def spike_count(self) -> int:
        return 0 if self.spike_time is None else 1


def if_ttfs_classic_run(train: SpikeTrain, weights, V_th) -> ClassicTTFSResult:
    """Single-spike TTFS IF: fire once at the first crossing, then stay silent.

    Input at step ``t`` is ``sum_i a_i(t) W_i t_i`` as in the silence-threshold
    neuron, so both see the same total potential; whatever arrives after the
    spike is reported as discarded.
    """
    if train.scheme != "ttfs":
        raise ValueError("if_ttfs_classic_run needs a ttfs train")
    w = _check_lengths(train, weights)
    vth = Fraction(V_th)
    if vth <= 0:
        raise ValueError("V_th must be positive")
    V = 0
    fired_at = None
    at_fire = 0
    discarded = 0
    for t in range(train.window_T):
        a = train.spikes_at(t)
        I = t * int((train.signs[a] * w[a]).sum()) if a.any() else 0
        if fired_at is not None:
            discarded += I
            continue
        V += I
        if V >= vth:
            fired_at = t
            at_fire = V
            V = 0
    return ClassicTTFSResult(fired_at, at_fire, discarded)
