"""Analytical energy model for linear and attention matmuls.

Energies are in normalized units where one 4-bit accumulate costs 1.00.
Every closed form returns an :class:`EnergyBreakdown` with its compute,
weight-read and data-move terms kept separate.  The arithmetic is plain
Python so ``fractions.Fraction`` inputs stay exact.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from numbers import Real
from pathlib import Path
from typing import Optional

METHODS = ("quant", "mixed_quant", "snn_baseline", "kirin")

_ACC = re.compile(r"^acc_(\d+)$")
_MAC = re.compile(r"^mac_(\d+)_(\d+)_(\d+)$")


@dataclass(frozen=True)
class EnergyConstants:
    acc_4: Real = 1.00
    acc_5: Real = 1.18
    mac_1_4_16: Real = 4.06
    mac_4_4_32: Real = 8.66
    mac_4_5_32: Real = 9.24
    mac_4_8_32: Real = 10.94
    mac_1_16_32: Real = 10.89
    mac_2_16_32: Real = 11.46
    mac_3_16_32: Real = 13.28
    read_per_bit: Real = 6.04
    move_per_bit: Real = 11.04
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.entries().items():
            if not value > 0:
                raise ValueError(f"energy constant {name} must be positive")
            if not (_ACC.match(name) or _MAC.match(name) or name in ("read_per_bit", "move_per_bit")):
                raise ValueError(f"unrecognized energy constant {name!r}")

    def entries(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        out.update(self.extra)
        return out

    def acc(self, bits: int) -> Real:
        key = f"acc_{bits}"
        table = self.entries()
        if key not in table:
            raise KeyError(f"no energy constant for {bits}-{bits}-{bits} ACC")
        return table[key]

    def mac(self, b_w: int, b_a: int) -> Real:
        """MAC cost for a ``b_w`` x ``b_a`` product, any accumulator width."""
        lo, hi = sorted((b_w, b_a))
        for name, value in self.entries().items():
            m = _MAC.match(name)
            if m and (int(m.group(1)), int(m.group(2))) == (lo, hi):
                return value
        raise KeyError(f"no energy constant for {b_w}-{b_a} MAC")

    @property
    def read(self) -> Real:
        return self.read_per_bit

    @property
    def move(self) -> Real:
        return self.move_per_bit

    def scaled(self, k) -> "EnergyConstants":
        kw = {f.name: getattr(self, f.name) * k for f in fields(self) if f.name != "extra"}
        return EnergyConstants(**kw, extra={n: v * k for n, v in self.extra.items()})

    def exact(self) -> "EnergyConstants":
        """Copy with every constant as a decimal-exact ``Fraction``."""
        kw = {f.name: Fraction(str(getattr(self, f.name))) for f in fields(self) if f.name != "extra"}
        return EnergyConstants(**kw, extra={n: Fraction(str(v)) for n, v in self.extra.items()})

    @classmethod
    def from_mapping(cls, data: dict) -> "EnergyConstants":
        known = {f.name for f in fields(cls)} - {"extra"}
        kw = {k: v for k, v in data.items() if k in known}
        extra = {k: v for k, v in data.items() if k not in known}
        return cls(**kw, extra=extra)

    @classmethod
    def load(cls, path) -> "EnergyConstants":
        return cls.from_mapping(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in self.entries().items()}


@dataclass(frozen=True)
class EnergyInputs:
    """Shapes, bit widths, outlier counts and spike rates of one matmul.

    ``gamma`` is the outlier channel count and ``beta`` the number of retained
    integers per row of the spike matrix; both may be fractional averages when
    fed back from a measurement.
    """

    B: Real = 1
    S: Real = 1
    H_in: Real = 1
    H_out: Real = 1
    b_w: int = 4
    b_a_low: int = 4
    b_a_high: int = 8
    gamma: Real = 0
    beta: Real = 0
    T_low: int = 16
    T_high: int = 256
    S_r_low: Real = Fraction(1, 16)
    S_r_high: Real = Fraction(1, 256)

    def __post_init__(self):
        for name in ("B", "S", "H_in", "H_out", "gamma", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.gamma > max(self.H_in, self.H_out):
            raise ValueError("gamma exceeds the channel count")
        for name in ("S_r_low", "S_r_high"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    def with_(self, **kw) -> "EnergyInputs":
        return replace(self, **kw)


@dataclass(frozen=True)
class EnergyBreakdown:
    compute: Real = 0
    read_data: Real = 0
    move_data: Real = 0

    @property
    def total(self) -> Real:
        return self.compute + self.read_data + self.move_data

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(self.compute + other.compute, self.read_data + other.read_data,
                               self.move_data + other.move_data)

    def __mul__(self, k) -> "EnergyBreakdown":
        return EnergyBreakdown(self.compute * k, self.read_data * k, self.move_data * k)

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"compute": float(self.compute), "read": float(self.read_data),
                "move": float(self.move_data), "total": float(self.total)}


def _cost(coef, price):
    """``coef * price()`` without resolving the constant when ``coef`` is 0."""
    return 0 if coef == 0 else coef * price()


# -- baseline quantization ---------------------------------------------------

def le_q(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    n = i.B * i.S * i.H_in * i.H_out
    return EnergyBreakdown(
        compute=_cost(n, lambda: c.mac(i.b_w, i.b_a_low)),
        read_data=n * i.b_w * c.read,
        move_data=n * i.b_a_low * c.move,
    )


def ae_q(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    return EnergyBreakdown(
        compute=_cost(i.B * i.S ** 2 * i.H_out, lambda: c.mac(i.b_w, i.b_a_low)),
        move_data=2 * i.B * i.S * i.H_out ** 2 * i.b_a_low * c.move,
    )


# -- outlier-aware mixed precision --------------------------------------------

def le_mq_high(i: EnergyInputs, c: EnergyConstants = EnergyConstants(), count=None) -> EnergyBreakdown:
    g = i.gamma if count is None else count
    n = i.B * i.S * g * i.H_out
    return EnergyBreakdown(
        compute=_cost(n, lambda: c.mac(i.b_w, i.b_a_high)),
        read_data=n * i.b_w * c.read,
        move_data=n * i.b_a_high * c.move,
    )


def le_q_low(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    n = i.B * i.S * (i.H_in - i.gamma) * i.H_out
    return EnergyBreakdown(
        compute=_cost(n, lambda: c.mac(i.b_w, i.b_a_low)),
        read_data=n * i.b_w * c.read,
        move_data=n * i.b_a_low * c.move,
    )


def le_mq(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    return le_mq_high(i, c) + le_q_low(i, c)


def ae_mq_high(i: EnergyInputs, c: EnergyConstants = EnergyConstants(), count=None) -> EnergyBreakdown:
    g = i.gamma if count is None else count
    return EnergyBreakdown(
        compute=_cost(i.B * i.S ** 2 * g, lambda: c.mac(i.b_w, i.b_a_high)),
        move_data=2 * i.B * i.S * g * i.H_out * i.b_a_high * c.move,
    )


def ae_mq_low(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    return EnergyBreakdown(
        compute=_cost(i.B * i.S ** 2 * (i.H_out - i.gamma), lambda: c.mac(i.b_w, i.b_a_low)),
        move_data=2 * i.B * i.S * (i.H_out - i.gamma) * i.H_out * i.b_a_low * c.move,
    )


def ae_mq(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    return ae_mq_high(i, c) + ae_mq_low(i, c)


# -- spiking baseline -----------------------------------------------------------

def le_s_high(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    n = i.B * i.S * i.H_out * i.gamma * i.T_high * i.S_r_high
    return EnergyBreakdown(
        compute=_cost(n, lambda: c.acc(i.b_a_high) + c.mac(i.b_w, i.b_a_high)),
        read_data=n * i.b_w * c.read,
        move_data=n * c.move,
    )


def le_s_low(i: EnergyInputs, c: EnergyConstants = EnergyConstants(), count=None) -> EnergyBreakdown:
    g = i.gamma if count is None else count
    n = i.B * i.S * i.H_out * (i.H_in - g) * i.T_low * i.S_r_low
    return EnergyBreakdown(
        compute=_cost(n, lambda: c.acc(i.b_a_low) + c.mac(i.b_w, i.b_a_low)),
        read_data=n * i.b_w * c.read,
        move_data=n * c.move,
    )


def le_s(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    return le_s_high(i, c) + le_s_low(i, c)


def ae_s_low(i: EnergyInputs, c: EnergyConstants = EnergyConstants(), count=None) -> EnergyBreakdown:
    g = i.gamma if count is None else count
    n = i.B * i.S * (i.H_out - g) * i.T_low * i.S_r_low
    return EnergyBreakdown(
        compute=_cost(n * i.S, lambda: c.acc(i.b_a_low) + c.mac(i.b_w, i.b_a_low)),
        move_data=2 * n * i.H_out * c.move,
    )


# -- hybrid spike/integer ---------------------------------------------------------

def le_kirin(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    """Linear layer: integer MACs for the ``beta`` retained elements, TTFS
    spikes at the short window for the rest."""
    return le_mq_high(i, c, count=i.beta) + le_s_low(i, c, count=i.beta)


def ae_kirin(i: EnergyInputs, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    return ae_mq_high(i, c, count=i.beta) + ae_s_low(i, c, count=i.beta)


LINEAR_FORMS = {"quant": le_q, "mixed_quant": le_mq, "snn_baseline": le_s, "kirin": le_kirin}
# the spiking baseline leaves attention as integer matmuls
ATTENTION_FORMS = {"quant": ae_q, "mixed_quant": ae_mq, "snn_baseline": ae_mq, "kirin": ae_kirin}


# -- measured counts ------------------------------------------------------------

def counting_oracle(trace, c: EnergyConstants = EnergyConstants()) -> EnergyBreakdown:
    """Price the operation and bit counts of an :class:`ExecutionTrace`."""
    compute = (_cost(trace.acc_ops, lambda: c.acc(trace.b_a_low))
               + _cost(trace.acc_ops_high, lambda: c.acc(trace.b_a_high))
               + _cost(trace.mac_ops_low, lambda: c.mac(trace.b_w, trace.b_a_low))
               + _cost(trace.mac_ops_high, lambda: c.mac(trace.b_w, trace.b_a_high)))
    return EnergyBreakdown(compute, trace.bits_read * c.read, trace.bits_moved * c.move)


def measured_inputs(trace, H_in: Optional[int] = None) -> EnergyInputs:
    """Closed-form inputs recovered from a single-matmul trace.

    ``beta`` becomes the mean retained count per spike row and the spike rates
    the measured spikes per neuron per timestep, all as exact fractions.
    """
    rows = trace.rows
    if rows == 0:
        raise ValueError("trace has no rows")
    if H_in is None:
        H_in = (trace.neurons + trace.neurons_high + trace.beta) // rows
    return EnergyInputs(
        B=1, S=rows, H_in=H_in, H_out=trace.fanout,
        b_w=trace.b_w, b_a_low=trace.b_a_low, b_a_high=trace.b_a_high,
        gamma=trace.gamma, beta=Fraction(trace.beta, rows),
        T_low=trace.T or 1, T_high=trace.T_high or 1,
        S_r_low=Fraction(trace.spikes, trace.neurons * trace.T) if trace.neurons and trace.T else 0,
        S_r_high=(Fraction(trace.spikes_high, trace.neurons_high * trace.T_high)
                  if trace.neurons_high and trace.T_high else 0),
    )


# -- block-level comparison --------------------------------------------------------

@dataclass
class MethodReport:
    linear: EnergyBreakdown
    attention: EnergyBreakdown

    @property
    def block(self) -> EnergyBreakdown:
        return self.linear + self.attention


@dataclass
class Comparison:
    per_method: dict
    reduction_vs: dict
    joules_per_unit: Optional[float] = None

    def total(self, method: str) -> Real:
        return self.per_method[method].block.total

    def micro_joules(self, method: str) -> Optional[float]:
        if self.joules_per_unit is None:
            return None
        return float(self.total(method)) * self.joules_per_unit * 1e6

    def rows(self) -> list[dict]:
        out = []
        for method, rep in self.per_method.items():
            for comp, br in (("linear", rep.linear), ("attention", rep.attention), ("block", rep.block)):
                out.append({"method": method, "component": comp, **br.to_dict()})
        return out

    def to_dict(self) -> dict:
        return {
            "rows": self.rows(),
            "reduction_vs": {k: {m: float(v) for m, v in d.items()} for k, d in self.reduction_vs.items()},
            "joules_per_unit": self.joules_per_unit,
        }


def method_comparison(i: EnergyInputs, c: EnergyConstants = EnergyConstants(),
                      overrides: Optional[dict] = None, linear_layers: int = 4,
                      attention_layers: int = 2, methods=METHODS,
                      joules_per_unit: Optional[float] = None) -> Comparison:
    """Energy of a linear-attention block for each method.

    The block has ``linear_layers`` projections of ``H_in x H_out`` and
    ``attention_layers`` activation-activation matmuls.  ``overrides`` maps a
    method name to its own inputs, e.g. a spiking baseline whose
    high-precision branch runs at other bits and window, or a quantization
    baseline at other bit widths.  ``reduction_vs[base][m]`` is the fractional
    saving of ``m`` relative to ``base``.
    """
    overrides = overrides or {}
    per = {}
    for m in methods:
        inp = overrides.get(m, i)
        per[m] = MethodReport(linear_layers * LINEAR_FORMS[m](inp, c),
                              attention_layers * ATTENTION_FORMS[m](inp, c))
    reduction = {}
    for base in per:
        tb = per[base].block.total
        reduction[base] = {m: (1 - per[m].block.total / tb) if tb else 0 for m in per}
    return Comparison(per, reduction, joules_per_unit)


# outlier counts per model: gamma from the mixed-precision spiking baseline,
# beta from the hybrid method
MODEL_PRESETS = {
    "opt-1.3b": {"H": 2048, "gamma": 50, "beta": 40},
    "opt-2.7b": {"H": 2560, "gamma": 55, "beta": 41},
    "llama2-7b": {"H": 4096, "gamma": 110, "beta": 87},
    "llama2-13b": {"H": 5120, "gamma": 118, "beta": 99},
}


def preset_inputs(name: str, B: int = 1, S: int = 1, S_r_low=Fraction(1, 16),
                  b_a_high: int = 8, T_high: Optional[int] = None,
                  S_r_high=None) -> EnergyInputs:
    try:
        p = MODEL_PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(MODEL_PRESETS)}") from None
    T_high = T_high or (1 << b_a_high)
    return EnergyInputs(B=B, S=S, H_in=p["H"], H_out=p["H"], b_w=4, b_a_low=4, b_a_high=b_a_high,
                        gamma=p["gamma"], beta=p["beta"], T_low=16, T_high=T_high,
                        S_r_low=S_r_low,
                        S_r_high=Fraction(1, T_high) if S_r_high is None else S_r_high)


@dataclass
class Calibration:
    B: int
    S: int
    S_r_low: float
    joules_per_unit: float
    baseline_method: str
    baseline_uJ: float
    predicted_uJ: float
    target_uJ: float
    relative_error: float
    comparison: Comparison

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("B", "S", "S_r_low", "joules_per_unit", "baseline_method",
                                            "baseline_uJ", "predicted_uJ", "target_uJ", "relative_error")}
        d["S_r_low"] = float(d["S_r_low"])
        return d


def calibrate(inputs: EnergyInputs, baseline_uJ: float, target_uJ: float,
              baseline_method: str = "quant", method: str = "kirin",
              c: EnergyConstants = EnergyConstants(), overrides: Optional[dict] = None) -> Calibration:
    """Fit the joules-per-unit scalar to a reported baseline energy.

    With the scalar fixed by ``baseline_method``, the energy predicted for
    ``method`` is compared with ``target_uJ``.
    """
    cmp = method_comparison(inputs, c, overrides=overrides)
    base_units = float(cmp.total(baseline_method))
    if base_units <= 0:
        raise ValueError("baseline energy is zero; nothing to calibrate")
    jpu = baseline_uJ * 1e-6 / base_units
    cmp.joules_per_unit = jpu
    predicted = cmp.micro_joules(method)
    return Calibration(inputs.B, inputs.S, inputs.S_r_low, jpu, baseline_method, baseline_uJ,
                       predicted, target_uJ, (predicted - target_uJ) / target_uJ, cmp)


# -- standard setups -----------------------------------------------------------------

# The constants table has no 8-bit ACC entry, so the spiking baseline's
# high-precision branch is priced at 5 bits over a 32-step window.
SNN_HIGH_BITS = 5


def spiking_baseline_inputs(i: EnergyInputs) -> EnergyInputs:
    T = 1 << SNN_HIGH_BITS
    return i.with_(b_a_high=SNN_HIGH_BITS, T_high=T, S_r_high=Fraction(1, T))


def standard_overrides(i: EnergyInputs) -> dict:
    return {"snn_baseline": spiking_baseline_inputs(i)}


# 3-bit weights with 16-bit activations for the reported baseline figure
REFERENCE_BASELINE = {"b_w": 3, "b_a_low": 16}
REFERENCE_UJ = {"baseline": 149.3, "kirin": 22.9}


def reference_calibration(preset: str = "opt-2.7b", B: int = 1, S: int = 1,
                          c: EnergyConstants = EnergyConstants()) -> Calibration:
    """Fit joules-per-unit on the published baseline figure and predict Kirin."""
    i = preset_inputs(preset, B=B, S=S)
    overrides = standard_overrides(i)
    overrides["quant"] = i.with_(**REFERENCE_BASELINE)
    return calibrate(i, REFERENCE_UJ["baseline"], REFERENCE_UJ["kirin"], "quant", "kirin", c, overrides)
