"""File formats: plain-text matrices and JSON for quantized tensors, spike
trains and execution traces."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .codec import SpikeTrain
from .hybrid import ExecutionTrace
from .quantizer import QuantParams, QuantTensor


def format_tensor(x) -> str:
    """``rows cols`` header then one whitespace-separated row per line.

    Floats are written with ``repr`` so reading them back is lossless.
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("only 1-D and 2-D arrays have a text form")
    lines = [f"{x.shape[0]} {x.shape[1]}"]
    is_int = np.issubdtype(x.dtype, np.integer)
    for row in x:
        lines.append(" ".join(str(int(v)) if is_int else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_tensor(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty tensor file")
    try:
        rows, cols = (int(v) for v in lines[0].split())
    except ValueError:
        raise ValueError("first line must be 'rows cols'") from None
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"expected {rows} rows, found {len(body)}")
    out = np.empty((rows, cols), dtype=np.float64)
    for i, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != cols:
            raise ValueError(f"row {i} has {len(vals)} values, expected {cols}")
        out[i] = [float(v) for v in vals]
    return out


def write_tensor(path, x) -> None:
    Path(path).write_text(format_tensor(x))


def read_tensor(path) -> np.ndarray:
    return parse_tensor(Path(path).read_text())


def _scale_json(scale):
    s = np.asarray(scale, dtype=np.float64)
    return float(s) if s.ndim == 0 else s.tolist()


def _params_json(p: QuantParams) -> dict:
    return {"scale": _scale_json(p.scale), "zero_point": int(p.zero_point),
            "bit_width": int(p.bit_width), "signed": bool(p.signed)}


def _params_from(d: dict) -> QuantParams:
    scale = d["scale"]
    scale = float(scale) if np.ndim(scale) == 0 else np.asarray(scale, dtype=np.float64)
    return QuantParams(scale, int(d["zero_point"]), int(d["bit_width"]), bool(d["signed"]))


def quant_tensor_to_dict(q: QuantTensor) -> dict:
    return {
        "codes": q.codes.tolist(),
        "scale": _scale_json(q.params_normal.scale),
        "zero_point": int(q.zero_point),
        "bit_width": {"normal": q.params_normal.bit_width, "outlier": q.params_outlier.bit_width},
        "groups": {"normal": _params_json(q.params_normal), "outlier": _params_json(q.params_outlier)},
        "outlier_channels": sorted(q.outlier_channels),
        "axis": q.axis,
    }


def quant_tensor_from_dict(d: dict) -> QuantTensor:
    q = QuantTensor(
        codes=np.asarray(d["codes"], dtype=np.int64),
        params_normal=_params_from(d["groups"]["normal"]),
        params_outlier=_params_from(d["groups"]["outlier"]),
        outlier_channels=frozenset(d["outlier_channels"]),
        axis=d["axis"],
    )
    q.check()
    return q


def dumps(obj) -> str:
    """JSON text for a QuantTensor, SpikeTrain or ExecutionTrace."""
    if isinstance(obj, QuantTensor):
        d = quant_tensor_to_dict(obj)
    elif isinstance(obj, (SpikeTrain, ExecutionTrace)):
        d = obj.to_dict()
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return json.dumps(d, sort_keys=True)


def load_quant_tensor(text: str) -> QuantTensor:
    return quant_tensor_from_dict(json.loads(text))


def load_spike_train(text: str) -> SpikeTrain:
    return SpikeTrain.from_dict(json.loads(text))


def load_trace(text: str) -> ExecutionTrace:
    d = json.loads(text)
    if d.get("elements") is not None:
        d["elements"] = [tuple(e) for e in d["elements"]]
    return ExecutionTrace(**d)
