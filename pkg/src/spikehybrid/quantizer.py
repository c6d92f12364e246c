"""Mixed-precision quantization with MAD-based outlier channel detection.

Normal channels are quantized at ``b_n`` bits and outlier channels at ``b_o``
bits.  Both groups share one scale (per tensor, or per output column for
weights) so that a single ``S1 * S2`` product dequantizes an integer dot
product; outlier channels simply get a wider clamp range on the same grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

Axis = Literal["row", "column"]
Mode = Literal["symmetric", "asymmetric"]


@dataclass(frozen=True)
class MadConfig:
    """Parameters of the scaled-MAD fence.

    ``statistic`` picks how channels are judged:

    * ``"majority"``: the fence is built from every element of the tensor and a
      channel is an outlier when more than ``min_fraction`` of its elements
      fall outside it.
    * ``"max"``: one max-magnitude statistic per channel, fenced against the
      median of those statistics.
    """

    threshold_k: float = 3.0
    consistency_constant: float = 1.4826
    statistic: Literal["majority", "max"] = "majority"
    min_fraction: float = 0.5

    def __post_init__(self):
        if not self.threshold_k > 0:
            raise ValueError("threshold_k must be positive")
        if not self.consistency_constant > 0:
            raise ValueError("consistency_constant must be positive")
        if self.statistic not in ("majority", "max"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if not 0.0 <= self.min_fraction < 1.0:
            raise ValueError("min_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class QuantParams:
    scale: np.ndarray | float
    zero_point: int
    bit_width: int
    signed: bool

    def __post_init__(self):
        if not np.all(np.asarray(self.scale) > 0):
            raise ValueError("scale must be positive")
        if self.bit_width < 1:
            raise ValueError("bit_width must be >= 1")

    @property
    def qmin(self) -> int:
        return -(1 << (self.bit_width - 1)) if self.signed else 0

    @property
    def qmax(self) -> int:
        return (1 << (self.bit_width - 1)) - 1 if self.signed else (1 << self.bit_width) - 1


@dataclass
class QuantTensor:
    """Integer codes plus the two parameter groups and the outlier channel set.

    ``axis`` names which axis a channel indexes: ``"column"`` means channel
    ``j`` is ``codes[:, j]`` (activations), ``"row"`` means ``codes[i, :]``
    (weights, indexed by input channel).
    """

    codes: np.ndarray
    params_normal: QuantParams
    params_outlier: QuantParams
    outlier_channels: frozenset = field(default_factory=frozenset)
    axis: Axis = "column"

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)
        if self.codes.ndim != 2:
            raise ValueError("codes must be a 2-D matrix")
        self.outlier_channels = frozenset(int(c) for c in self.outlier_channels)
        if self.axis not in ("row", "column"):
            raise ValueError(f"invalid axis {self.axis!r}")
        n = self.channel_count
        if any(c < 0 or c >= n for c in self.outlier_channels):
            raise ValueError("outlier channel index out of range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    @property
    def channel_count(self) -> int:
        return self.codes.shape[1] if self.axis == "column" else self.codes.shape[0]

    @property
    def gamma(self) -> int:
        return len(self.outlier_channels)

    @property
    def channel_mask(self) -> np.ndarray:
        mask = np.zeros(self.channel_count, dtype=bool)
        mask[sorted(self.outlier_channels)] = True
        return mask

    @property
    def outlier_mask(self) -> np.ndarray:
        """Element-level mask of positions inside outlier channels."""
        m = self.channel_mask
        return np.broadcast_to(m[None, :] if self.axis == "column" else m[:, None], self.shape)

    @property
    def scale(self) -> np.ndarray:
        """Scale broadcastable against ``codes`` (shared by both groups)."""
        return np.asarray(self.params_normal.scale, dtype=np.float64)

    @property
    def zero_point(self) -> int:
        return self.params_normal.zero_point

    def transpose(self) -> "QuantTensor":
        return QuantTensor(
            codes=self.codes.T.copy(),
            params_normal=_transpose_params(self.params_normal),
            params_outlier=_transpose_params(self.params_outlier),
            outlier_channels=self.outlier_channels,
            axis="row" if self.axis == "column" else "column",
        )

    def check(self) -> None:
        """Raise if any code falls outside its group's range."""
        mask = self.outlier_mask
        for params, sel in ((self.params_normal, ~mask), (self.params_outlier, mask)):
            vals = self.codes[sel]
            if vals.size and (vals.min() < params.qmin or vals.max() > params.qmax):
                raise ValueError(f"codes exceed the {params.bit_width}-bit range")


def _transpose_params(p: QuantParams) -> QuantParams:
    scale = p.scale
    if np.ndim(scale) == 2:
        scale = np.asarray(scale).T.copy()
    return QuantParams(scale, p.zero_point, p.bit_width, p.signed)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def mad_fence_outliers(values, cfg: MadConfig = MadConfig()) -> np.ndarray:
    """Boolean mask of values outside ``median +- k * c * MAD``.

    When the MAD is zero but the data are not constant, only the values with
    the strictly largest deviation from the median are flagged.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty input")
    med = np.median(v)
    dev = np.abs(v - med)
    mad = np.median(dev)
    if mad == 0:
        top = dev.max()
        if top == 0:
            return np.zeros(v.shape, dtype=bool)
        return dev == top
    return dev > cfg.threshold_k * cfg.consistency_constant * mad


def detect_outlier_channels(x, axis: Axis = "column", cfg: MadConfig = MadConfig()) -> frozenset:
    """Indices of channels flagged by the scaled-MAD fence."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty input")
    if x.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if axis not in ("row", "column"):
        raise ValueError(f"invalid axis {axis!r}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    per_channel = x if axis == "column" else x.T  # channels along axis 1
    if cfg.statistic == "max":
        flagged = mad_fence_outliers(np.abs(per_channel).max(axis=0), cfg)
    else:
        elem = mad_fence_outliers(per_channel, cfg).reshape(per_channel.shape)
        flagged = elem.mean(axis=0) > cfg.min_fraction
    return frozenset(int(i) for i in np.flatnonzero(flagged))


def _select_scale(x: np.ndarray, normal_sel: np.ndarray, b_n: int, mode: Mode,
                  scale_axis: Optional[int]):
    """Scale and zero point fitted to the normal group.

    ``scale_axis=None`` gives one scalar; ``scale_axis=1`` one scale per column
    (per output channel of a weight matrix), returned with shape ``(1, cols)``.
    """
    masked = np.where(normal_sel, x, np.nan)
    reduce_axis = None if scale_axis is None else 0
    if mode == "symmetric":
        with np.errstate(all="ignore"):
            absmax = np.nanmax(np.abs(masked), axis=reduce_axis, keepdims=scale_axis is not None)
        absmax = np.nan_to_num(absmax, nan=0.0)
        qmax = (1 << (b_n - 1)) - 1
        scale = np.where(absmax > 0, absmax / qmax, 1.0)
        return (float(scale) if scale_axis is None else scale), 0
    if scale_axis is not None:
        raise ValueError("asymmetric mode supports per-tensor scales only")
    vals = x[normal_sel]
    lo = min(float(vals.min()), 0.0) if vals.size else 0.0
    hi = max(float(vals.max()), 0.0) if vals.size else 0.0
    qmax = (1 << b_n) - 1
    scale = (hi - lo) / qmax if hi > lo else 1.0
    zp = int(np.clip(round_half_away(np.array(-lo / scale)), 0, qmax))
    return scale, zp


def quantize(x, axis: Axis = "column", b_n: int = 4, b_o: int = 8, mode: Mode = "symmetric",
             cfg: MadConfig = MadConfig(), scale_axis: Optional[int] = None,
             outlier_channels=None) -> QuantTensor:
    """Quantize ``x`` with outlier-aware mixed precision.

    Parameters
    ----------
    x : array_like
        Finite real matrix.
    axis : {"column", "row"}
        Which axis indexes channels for outlier detection.
    b_n, b_o : int
        Bit widths of normal and outlier channels, ``b_n <= b_o``.
    mode : {"symmetric", "asymmetric"}
        Symmetric uses signed codes with zero point 0.  Asymmetric gives the
        normal group unsigned ``b_n``-bit codes with a zero point; outlier
        channels keep signed ``b_o``-bit codes around the same zero point.
    scale_axis : None or 1
        ``None`` for a per-tensor scale, ``1`` for one scale per column.
    outlier_channels : iterable of int, optional
        Skip detection and use this channel set.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise ValueError("empty input" if x.size == 0 else "expected a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    if b_n > b_o:
        raise ValueError(f"b_n ({b_n}) must not exceed b_o ({b_o})")
    if mode not in ("symmetric", "asymmetric"):
        raise ValueError(f"invalid mode {mode!r}")
    if outlier_channels is None:
        outlier_channels = detect_outlier_channels(x, axis, cfg)
    qt_mask = QuantTensor(np.zeros(x.shape, np.int64), QuantParams(1.0, 0, b_n, True),
                          QuantParams(1.0, 0, b_o, True), outlier_channels, axis).outlier_mask

    scale, zp = _select_scale(x, ~qt_mask, b_n, mode, scale_axis)
    normal = QuantParams(scale, zp, b_n, signed=(mode == "symmetric"))
    outlier = QuantParams(scale, zp, b_o, signed=True)

    raw = round_half_away(x / np.asarray(scale)) + zp
    lo = np.where(qt_mask, outlier.qmin, normal.qmin)
    hi = np.where(qt_mask, outlier.qmax, normal.qmax)
    codes = np.clip(raw, lo, hi).astype(np.int64)
    return QuantTensor(codes, normal, outlier, outlier_channels, axis)


def quantize_value(x: float, scale: float, zero_point: int = 0, bit_width: int = 8,
                   signed: bool = True) -> int:
    """Scalar quantization ``clamp(round(x / scale) + zero_point)``."""
    p = QuantParams(scale, zero_point, bit_width, signed)
    q = round_half_away(np.array(x / scale)) + zero_point
    return int(np.clip(q, p.qmin, p.qmax))


def dequantize(q: QuantTensor) -> np.ndarray:
    """``scale * (code - zero_point)`` elementwise."""
    return q.scale * (q.codes - q.zero_point).astype(np.float64)
