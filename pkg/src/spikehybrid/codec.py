"""Rate and time-to-first-spike (TTFS) encoding of integer codes.

A train stores spike magnitudes and a per-neuron sign flag.  Trains are kept
as arrays rather than per-neuron objects: for TTFS one spike time per neuron
(``-1`` when silent), for rate coding one spike count per neuron with spikes
packed at ``0 .. count-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

Scheme = Literal["rate", "ttfs"]


@dataclass
class SpikeTrain:
    window_T: int
    scheme: Scheme
    values: np.ndarray  # ttfs: spike time or -1; rate: spike count
    signs: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        self.signs = np.asarray(self.signs, dtype=np.int64)
        if self.scheme not in ("rate", "ttfs"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.values.shape != self.signs.shape:
            raise ValueError("values and signs must have the same shape")
        if self.window_T < 1:
            raise ValueError("window_T must be positive")
        if not np.all(np.isin(self.signs, (-1, 1))):
            raise ValueError("signs must be +1 or -1")
        if self.scheme == "ttfs":
            if np.any(self.values < -1) or np.any(self.values >= self.window_T):
                raise ValueError("spike time outside the window")
        elif np.any(self.values < 0) or np.any(self.values > self.window_T):
            raise ValueError("spike count outside [0, T]")

    def __len__(self) -> int:
        return self.values.size

    @property
    def fired(self) -> np.ndarray:
        return self.values >= 0 if self.scheme == "ttfs" else self.values > 0

    @property
    def spike_counts(self) -> np.ndarray:
        return self.fired.astype(np.int64) if self.scheme == "ttfs" else self.values

    @property
    def total_spikes(self) -> int:
        return int(self.spike_counts.sum())

    @property
    def max_spike_time(self) -> int:
        """Latest timestep carrying a spike, ``-1`` for a silent train."""
        if self.values.size == 0 or not self.fired.any():
            return -1
        if self.scheme == "ttfs":
            return int(self.values.max())
        return int(self.values.max()) - 1

    def spike_times(self, i: int) -> list[int]:
        v = int(self.values.flat[i])
        if self.scheme == "ttfs":
            return [v] if v >= 0 else []
        return list(range(v))

    def spikes_at(self, t: int) -> np.ndarray:
        """Mask of neurons that spike at timestep ``t``."""
        if self.scheme == "ttfs":
            return self.values == t
        return self.values > t

    def to_dict(self) -> dict:
        return {
            "T": self.window_T,
            "scheme": self.scheme,
            "neurons": [{"times": self.spike_times(i), "sign": int(s)}
                        for i, s in enumerate(self.signs.ravel())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpikeTrain":
        scheme = d["scheme"]
        neurons = d["neurons"]
        signs = [n["sign"] for n in neurons]
        if scheme == "ttfs":
            if any(len(n["times"]) > 1 for n in neurons):
                raise ValueError("a ttfs neuron fires at most one spike")
            values = [n["times"][0] if n["times"] else -1 for n in neurons]
        else:
            values = []
            for n in neurons:
                times = sorted(n["times"])
                if times != list(range(len(times))):
                    raise ValueError("rate spikes must be packed from t=0")
                values.append(len(times))
        return cls(int(d["T"]), scheme, np.array(values, dtype=np.int64), np.array(signs, dtype=np.int64))


@dataclass(frozen=True)
class SpikeRateStats:
    mean_rate: float
    fired_fraction: float


def _signs_for(codes: np.ndarray, signs) -> np.ndarray:
    if signs is None:
        return np.where(codes < 0, -1, 1)
    signs = np.asarray(signs, dtype=np.int64)
    if signs.shape != codes.shape:
        raise ValueError("signs must match codes")
    return signs


def encode_ttfs(codes, signs=None, T: int = 16) -> SpikeTrain:
    """One spike at ``t = |code|``; code 0 stays silent.

    ``signs`` defaults to the sign of each code.  Magnitudes must be below
    ``T``; larger ones belong to the retained-integer part.
    """
    codes = np.asarray(codes, dtype=np.int64)
    mag = np.abs(codes)
    if np.any(mag >= T):
        raise ValueError(f"code magnitude exceeds time window T={T}")
    times = np.where(mag > 0, mag, -1)
    return SpikeTrain(T, "ttfs", times, _signs_for(codes, signs))


def encode_rate(codes, signs=None, T: int = 16) -> SpikeTrain:
    """``|code|`` spikes packed at timesteps ``0 .. |code|-1``."""
    codes = np.asarray(codes, dtype=np.int64)
    mag = np.abs(codes)
    if np.any(mag > T):
        raise ValueError(f"code magnitude exceeds time window T={T}")
    return SpikeTrain(T, "rate", mag, _signs_for(codes, signs))


def decode(train: SpikeTrain) -> np.ndarray:
    if train.scheme == "ttfs":
        mag = np.where(train.values > 0, train.values, 0)
    else:
        mag = train.values
    return train.signs * mag


def measure_rates(train: SpikeTrain) -> SpikeRateStats:
    n = len(train)
    if n == 0:
        raise ValueError("empty train")
    return SpikeRateStats(
        mean_rate=train.total_spikes / (n * train.window_T),
        fired_fraction=int(train.fired.sum()) / n,
    )
