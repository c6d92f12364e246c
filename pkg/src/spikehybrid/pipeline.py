"""Toy transformer block run through float, quantized, spiking-baseline and
hybrid execution modes.

The block is a single-head attention layer (Q/K/V/O projections, ``Q K^T``
and ``P V``) followed by a two-layer MLP.  Only matmuls change between modes;
softmax, layer norm, GELU and residual adds are real arithmetic everywhere.
Every matmul input is re-quantized with a fresh activation scale, weights are
quantized once when the block is built.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .codec import SpikeRateStats
from .energy import EnergyConstants, counting_oracle
from .hybrid import ExecutionTrace, hybrid_matmul, quantized_matmul, rate_matmul
from .hybrid import count_retained
from .quantizer import MadConfig, QuantTensor, quantize

Mode = Literal["fp", "quant_ann", "snn_baseline", "kirin"]
MODES = ("fp", "quant_ann", "snn_baseline", "kirin")
MODE_ALIASES = {"fp": "fp", "quant": "quant_ann", "quant_ann": "quant_ann", "snn": "snn_baseline",
                "snn_baseline": "snn_baseline", "kirin": "kirin"}
# energy-model method each execution mode is priced as
MODE_METHOD = {"quant_ann": "mixed_quant", "snn_baseline": "snn_baseline", "kirin": "kirin"}

LINEAR_LAYERS = ("q_proj", "k_proj", "v_proj", "o_proj", "mlp_up", "mlp_down")
ATTENTION_LAYERS = ("qk", "pv")
LAYERS = ("q_proj", "k_proj", "v_proj", "qk", "pv", "o_proj", "mlp_up", "mlp_down")

LAYER_CSV_COLUMNS = ("layer", "kind", "mode", "max_dev_vs_quant", "max_dev_quant_vs_fp",
                     "max_spike_time", "window", "mean_rate", "beta", "gamma",
                     "truncations", "negative_st")
ENERGY_CSV_COLUMNS = ("method", "component", "compute", "read", "move", "total")


@dataclass
class BlockConfig:
    B: int = 1
    S: int = 8
    H: int = 32
    b_n: int = 4
    b_o: int = 8
    scheme: str = "ttfs"
    mad: MadConfig = field(default_factory=MadConfig)
    seed: int = 0
    weight_distribution: str = "gaussian"
    gamma: int = 0
    scale_factor: float = 20.0
    mlp_ratio: int = 4
    quant_mode: str = "symmetric"
    emission: str = "exact"

    def __post_init__(self):
        if isinstance(self.mad, dict):
            self.mad = MadConfig(**self.mad)
        for name in ("B", "S", "H", "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 1 <= self.b_n <= self.b_o:
            raise ValueError("need 1 <= b_n <= b_o")
        if self.scheme != "ttfs":
            raise ValueError("the hybrid path encodes spikes with ttfs")
        if self.weight_distribution not in ("gaussian", "gaussian_plus_outlier_channels"):
            raise ValueError(f"unknown weight distribution {self.weight_distribution!r}")
        if not 0 <= self.gamma <= self.H:
            raise ValueError("gamma must lie in [0, H]")
        if self.emission not in ("exact", "spike"):
            raise ValueError(f"unknown emission mode {self.emission!r}")

    @property
    def T_n(self) -> int:
        return 1 << self.b_n

    @property
    def T_o(self) -> int:
        return 1 << self.b_o

    @property
    def injected(self) -> int:
        return self.gamma if self.weight_distribution == "gaussian_plus_outlier_channels" else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mad"] = asdict(self.mad)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BlockConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "BlockConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def inject_outlier_channels(x: np.ndarray, gamma: int, scale_factor: float, rng,
                            axis: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Scale ``gamma`` random channels of ``x`` by ``scale_factor``."""
    idx = np.sort(rng.choice(x.shape[axis], size=gamma, replace=False)) if gamma else np.array([], int)
    x = x.copy()
    if axis == 1:
        x[:, idx] *= scale_factor
    else:
        x[idx, :] *= scale_factor
    return x, idx


def synthetic_activations(S: int, H: int, gamma: int, scale_factor: float = 20.0, seed: int = 0):
    """Gaussian ``S x H`` activations with ``gamma`` channels scaled up."""
    rng = np.random.default_rng(seed)
    return inject_outlier_channels(rng.standard_normal((S, H)), gamma, scale_factor, rng)


@dataclass
class Block:
    cfg: BlockConfig
    x: np.ndarray  # (B, S, H)
    weights: dict
    biases: dict
    qweights: dict
    injected: dict

    def to_dict(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "x": self.x.tolist(),
            "weights": {k: v.tolist() for k, v in self.weights.items()},
            "biases": {k: v.tolist() for k, v in self.biases.items()},
            "injected": {k: v.tolist() for k, v in self.injected.items()},
        }


def build_block(cfg: BlockConfig) -> Block:
    """Deterministic toy block from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    H, F = cfg.H, cfg.H * cfg.mlp_ratio
    shapes = {"q_proj": (H, H), "k_proj": (H, H), "v_proj": (H, H), "o_proj": (H, H),
              "mlp_up": (H, F), "mlp_down": (F, H)}
    x = rng.standard_normal((cfg.B, cfg.S, H))
    injected = {}
    if cfg.injected:
        flat, idx = inject_outlier_channels(x.reshape(-1, H), cfg.injected, cfg.scale_factor, rng)
        x = flat.reshape(cfg.B, cfg.S, H)
        injected["x"] = idx
    weights, biases, qweights = {}, {}, {}
    for name, (fan_in, fan_out) in shapes.items():
        w = rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)
        if cfg.injected:
            g = min(cfg.injected, fan_in)
            w, idx = inject_outlier_channels(w, g, cfg.scale_factor, rng, axis=0)
            injected[name] = idx
        weights[name] = w
        biases[name] = 0.02 * rng.standard_normal(fan_out)
        qweights[name] = quantize(w, "row", cfg.b_n, cfg.b_o, "symmetric", cfg.mad, scale_axis=1)
    return Block(cfg, x, weights, biases, qweights, injected)


@dataclass
class LayerStats:
    layer: str
    kind: str
    trace: Optional[ExecutionTrace] = None
    rates: Optional[SpikeRateStats] = None
    window: int = 0
    truncations: int = 0
    negative_st: int = 0


@dataclass
class ModeRun:
    mode: str
    outputs: dict  # layer -> list of per-batch output matrices
    final: np.ndarray
    layers: dict  # layer -> LayerStats
    accumulators: dict = field(default_factory=dict)  # layer -> list of integer V_total

    def layer_output(self, name: str) -> np.ndarray:
        return np.stack(self.outputs[name])


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(h: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    return (h - mu) / np.sqrt(var + eps)


def _gelu(z: np.ndarray) -> np.ndarray:
    return 0.5 * z * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (z + 0.044715 * z ** 3)))


class _Executor:
    def __init__(self, block: Block, mode: str):
        self.block = block
        self.cfg = block.cfg
        self.mode = mode
        self.stats: dict[str, LayerStats] = {}
        self.outputs: dict[str, list] = {}
        self.accumulators: dict[str, list] = {}

    def _quant_act(self, x: np.ndarray, axis: str) -> QuantTensor:
        c = self.cfg
        return quantize(x, axis, c.b_n, c.b_o, c.quant_mode, c.mad)

    def _record(self, name: str, kind: str, out: np.ndarray, res=None):
        self.outputs.setdefault(name, []).append(out)
        st = self.stats.setdefault(name, LayerStats(name, kind))
        if res is None:
            return
        self.accumulators.setdefault(name, []).append(res.V_total)
        st.trace = res.trace if st.trace is None else st.trace + res.trace
        st.truncations += res.truncations
        st.negative_st += res.negative_st

    def matmul(self, name: str, a: np.ndarray, b_real: Optional[np.ndarray] = None,
               bias: Optional[np.ndarray] = None) -> np.ndarray:
        """``a @ W[name] + bias`` for projections, ``a @ b_real`` for attention."""
        attention = b_real is not None
        kind = "attention" if attention else "linear"
        if self.mode == "fp":
            out = a @ (b_real if attention else self.block.weights[name])
            out = out + (0 if bias is None else bias)
            self._record(name, kind, out)
            return out
        qa = self._quant_act(a, "column")
        qb = self._quant_act(b_real, "row") if attention else self.block.qweights[name]
        if self.mode == "quant_ann" or (self.mode == "snn_baseline" and attention):
            res = quantized_matmul(qa, qb, bias, attention=attention)
        elif self.mode == "snn_baseline":
            res = rate_matmul(qa, qb, bias, self.cfg.T_n, self.cfg.T_o)
        else:
            res = hybrid_matmul(qa, qb, bias, T_n=self.cfg.T_n, emission=self.cfg.emission,
                                attention=attention)
        self._record(name, kind, res.output, res)
        return res.output

    def finish(self, final: np.ndarray) -> ModeRun:
        for st in self.stats.values():
            tr = st.trace
            if tr is None:
                continue
            if self.mode == "snn_baseline" and st.kind == "linear":
                st.window = self.cfg.T_o
            elif self.mode == "kirin":
                st.window = self.cfg.T_n
            total_neurons = tr.neurons + tr.neurons_high
            if total_neurons and st.window:
                st.rates = SpikeRateStats(
                    mean_rate=(tr.spikes + tr.spikes_high) / (total_neurons * st.window),
                    fired_fraction=float("nan"),
                )
        return ModeRun(self.mode, self.outputs, final, self.stats, self.accumulators)


def run_block(block: Block, mode: str) -> ModeRun:
    """Run every batch element of the block in one execution mode."""
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    ex = _Executor(block, mode)
    bz = block.biases
    finals = []
    H = block.cfg.H
    for x in block.x:
        q = ex.matmul("q_proj", x, bias=bz["q_proj"])
        k = ex.matmul("k_proj", x, bias=bz["k_proj"])
        v = ex.matmul("v_proj", x, bias=bz["v_proj"])
        scores = ex.matmul("qk", q, k.T)
        p = _softmax(scores / math.sqrt(H))
        ctx = ex.matmul("pv", p, v)
        h = x + ex.matmul("o_proj", ctx, bias=bz["o_proj"])
        up = ex.matmul("mlp_up", _layer_norm(h), bias=bz["mlp_up"])
        out = h + ex.matmul("mlp_down", _gelu(up), bias=bz["mlp_down"])
        finals.append(out)
    return ex.finish(np.stack(finals))


def weight_detection(block: Block) -> dict:
    """Detected vs injected outlier rows for every weight matrix."""
    out = {}
    for name, q in block.qweights.items():
        injected = set(int(i) for i in block.injected.get(name, []))
        detected = set(q.outlier_channels)
        out[name] = {"injected": sorted(injected), "detected": sorted(detected),
                     "false_positives": sorted(detected - injected), "missed": sorted(injected - detected)}
    return out


def _max_dev(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) if a.size else 0.0


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    config: dict
    layers: list  # rows keyed by LAYER_CSV_COLUMNS
    energy: dict  # method -> {component -> breakdown dict}
    energy_errors: dict
    latency: dict  # mode -> {layer -> max spike time}
    windows: dict  # mode -> {layer -> window}
    checks: list
    final_dev: dict
    detection: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "layers": self.layers,
            "energy": self.energy,
            "energy_errors": self.energy_errors,
            "latency": self.latency,
            "windows": self.windows,
            "final_dev": self.final_dev,
            "detection": self.detection,
            "checks": [asdict(c) for c in self.checks],
            "ok": self.ok,
        }


def _energy_by_component(run: ModeRun, c: EnergyConstants) -> dict:
    out = {}
    for comp, names in (("linear", LINEAR_LAYERS), ("attention", ATTENTION_LAYERS)):
        tr = ExecutionTrace()
        for n in names:
            if run.layers[n].trace is not None:
                tr = tr + run.layers[n].trace
        out[comp] = counting_oracle(tr, c)
    out["block"] = out["linear"] + out["attention"]
    return out


def compare(block: Block, modes=MODES, constants: Optional[EnergyConstants] = None) -> tuple[RunReport, dict]:
    """Run ``modes`` and collect deviations, latency, energy and checks.

    Deviations of the spiking modes are measured against ``quant_ann`` (which
    is always run), and ``quant_ann`` against ``fp`` when ``fp`` is requested.
    """
    constants = constants or EnergyConstants()
    modes = [MODE_ALIASES.get(m, m) for m in modes]
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    needed = list(dict.fromkeys(["quant_ann", *modes]))
    runs = {m: run_block(block, m) for m in needed}
    ref = runs["quant_ann"]
    cfg = block.cfg
    rows, checks = [], []
    latency, windows = {}, {}
    for m in modes:
        run = runs[m]
        latency[m], windows[m] = {}, {}
        for name in LAYERS:
            st = run.layers[name]
            tr = st.trace
            row = {
                "layer": name, "kind": st.kind, "mode": m,
                "max_dev_vs_quant": _max_dev(run.layer_output(name), ref.layer_output(name)),
                "max_dev_quant_vs_fp": (_max_dev(ref.layer_output(name), runs["fp"].layer_output(name))
                                        if "fp" in runs else None),
                "max_spike_time": tr.max_spike_time if tr is not None else None,
                "window": st.window or None,
                "mean_rate": st.rates.mean_rate if st.rates else None,
                "beta": tr.beta if tr is not None else None,
                "gamma": tr.gamma if tr is not None else None,
                "truncations": st.truncations,
                "negative_st": st.negative_st,
            }
            rows.append(row)
            if tr is not None and tr.max_spike_time >= 0:
                latency[m][name] = tr.max_spike_time
            if st.window:
                windows[m][name] = st.window

    if "kirin" in modes:
        kir = runs["kirin"]
        devs = [_max_dev(kir.layer_output(n), ref.layer_output(n)) for n in LAYERS]
        checks.append(Check("kirin_equals_quant_ann", max(devs) == 0.0,
                            f"max layer deviation {max(devs)!r}"))
        lat = max(latency["kirin"].values(), default=-1)
        checks.append(Check("kirin_latency_within_T_n", lat < cfg.T_n,
                            f"max spike time {lat} vs T_n {cfg.T_n}"))
    if "snn_baseline" in modes:
        sw = [w for n, w in windows["snn_baseline"].items() if n in LINEAR_LAYERS]
        checks.append(Check("snn_window_is_T_o", bool(sw) and all(w == cfg.T_o for w in sw),
                            f"windows {sorted(set(sw))}"))
        snn_dev = max(_max_dev(runs["snn_baseline"].layer_output(n), ref.layer_output(n)) for n in LAYERS)
        checks.append(Check("snn_baseline_equals_quant_ann", snn_dev == 0.0, f"max deviation {snn_dev!r}"))

    energy, energy_errors, attn = {}, {}, {}
    for m in modes:
        if m == "fp":
            continue
        method = MODE_METHOD[m]
        try:
            comp = _energy_by_component(runs[m], constants)
        except KeyError as exc:
            energy_errors[method] = str(exc.args[0])
            continue
        energy[method] = {k: v.to_dict() for k, v in comp.items()}
        attn[method] = comp["attention"].total
    if {"kirin", "mixed_quant"} <= attn.keys():
        chain = [attn["kirin"], attn.get("snn_baseline", attn["mixed_quant"]), attn["mixed_quant"]]
        checks.append(Check("attention_energy_ordering", chain[0] <= chain[1] <= chain[2],
                            "kirin <= snn_baseline <= mixed_quant: " + ", ".join(f"{float(v):.6g}" for v in chain)))

    final_dev = {m: _max_dev(runs[m].final, ref.final) for m in modes}
    report = RunReport(cfg.to_dict(), rows, energy, energy_errors, latency, windows, checks, final_dev,
                       weight_detection(block))
    return report, runs


def outlier_statistics(S: int = 64, H: int = 4096, gamma: int = 110, scale_factor: float = 20.0,
                       seed: int = 0, b_n: int = 4, b_o: int = 8, mad: MadConfig = MadConfig()) -> dict:
    """Injection-recovery and retained-integer ratio on a synthetic tensor."""
    x, idx = synthetic_activations(S, H, gamma, scale_factor, seed)
    q = quantize(x, "column", b_n, b_o, "symmetric", mad)
    beta = count_retained(q, 1 << b_n)
    detected = q.outlier_channels
    return {
        "S": S, "H": H, "injected_gamma": gamma, "detected_gamma": len(detected),
        "exact_recovery": detected == frozenset(int(i) for i in idx),
        "false_positives": len(detected - set(idx.tolist())),
        "missed": len(set(idx.tolist()) - detected),
        "beta": beta, "beta_per_row": beta / S, "beta_ratio": beta / x.size,
    }


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def report_json(report: RunReport) -> str:
    return json.dumps(_clean(report.to_dict()), indent=2, sort_keys=True) + "\n"


def layers_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LAYER_CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in report.layers:
        w.writerow({k: ("" if row[k] is None else row[k]) for k in LAYER_CSV_COLUMNS})
    return buf.getvalue()


def energy_csv(energy: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ENERGY_CSV_COLUMNS)
    for method in sorted(energy):
        for comp, br in energy[method].items():
            w.writerow([method, comp, br["compute"], br["read"], br["move"], br["total"]])
    return buf.getvalue()


def write_report(report: RunReport, out_dir, fmt: str = "json") -> list[Path]:
    """Write ``report.json`` or ``layers.csv`` + ``energy.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        p = out / "report.json"
        p.write_text(report_json(report))
        return [p]
    if fmt == "csv":
        p1, p2 = out / "layers.csv", out / "energy.csv"
        p1.write_text(layers_csv(report))
        p2.write_text(energy_csv(report.energy))
        return [p1, p2]
    raise ValueError(f"unknown report format {fmt!r}")
