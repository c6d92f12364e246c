"""Hybrid spike/integer matmul against the integer reference.

Small codes travel as TTFS spikes inside a 16-step window; codes too large
for it stay integers and go through a sparse integer product.  The two
partial potentials add up to the integer matmul, so the output matches the
quantized reference bit for bit.
"""

import numpy as np

from spikehybrid.hybrid import hybrid_matmul, quantized_matmul, split
from spikehybrid.quantizer import quantize

rng = np.random.default_rng(1)
a = rng.standard_normal((8, 64))
a[:, [5, 40]] *= 20
w = rng.standard_normal((64, 16)) / 8

qa = quantize(a, "column")
qw = quantize(w, "row", scale_axis=1)
h = split(qa, T_n=16)
print(f"{h.beta} of {qa.codes.size} activation codes kept as integers "
      f"({h.beta / qa.codes.size:.2%}), the rest as single spikes")

ref = quantized_matmul(qa, qw)
hyb = hybrid_matmul(qa, qw)
print("orientation:", hyb.trace.orientation, "| retained counts A/B:",
      hyb.selection.count_A, hyb.selection.count_B)
print("potentials equal:", np.array_equal(ref.V_total, hyb.V_total))
print("outputs equal:", np.array_equal(ref.output, hyb.output))
t = hyb.trace
print(f"ops: {t.acc_ops} ACC, {t.mac_ops_low} low MAC, {t.mac_ops_high} high MAC; "
      f"latest input spike t={t.max_spike_time}")
