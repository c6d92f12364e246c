"""Outlier-aware quantization, then spike coding of the codes.

A small activation matrix gets two loud channels.  MAD detection flags them,
they keep 8 bits while the rest drop to 4, and the 4-bit codes are written
as single TTFS spikes or as rate-coded bursts.
"""

import numpy as np

from spikehybrid.codec import decode, encode_rate, encode_ttfs, measure_rates
from spikehybrid.quantizer import dequantize, quantize

rng = np.random.default_rng(0)
x = rng.standard_normal((4, 12))
x[:, [3, 9]] *= 20

q = quantize(x, "column", b_n=4, b_o=8)
print("outlier channels:", sorted(q.outlier_channels))
print("codes:\n", q.codes)
print("max abs error:", np.abs(dequantize(q) - x).max(), "(half a step is", float(q.scale.max()) / 2, ")")

normal = np.where(q.outlier_mask, 0, q.codes)
ttfs = encode_ttfs(normal, T=16)
rate = encode_rate(normal, T=16)
for name, train in (("ttfs", ttfs), ("rate", rate)):
    r = measure_rates(train)
    print(f"{name}: {train.total_spikes} spikes, mean rate {r.mean_rate:.4f}, "
          f"latest spike t={train.max_spike_time}, lossless={np.array_equal(decode(train), normal)}")
