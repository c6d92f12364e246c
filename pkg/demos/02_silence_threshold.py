"""The silence-threshold neuron reads a whole integer potential in one shot.

With ``S_th = 1 / (S1 * S2)`` the spike time is ``floor(V_total / S_th)``
and the residual carries the remainder, so the output equals the
dequantized integer result exactly.  A classic single-spike TTFS neuron
fires at its first crossing and throws the rest away.
"""

from spikehybrid.codec import encode_ttfs
from spikehybrid.neurons import ThresholdSpec, accumulate_potential, if_silence_run, if_ttfs_classic_run

codes = [3, 0, 7, 5]
weights = [2, -1, 4, 1]
train = encode_ttfs(codes, T=16)

V = accumulate_potential(train, weights)
print("accumulated potential", V, "== integer dot product", sum(c * w for c, w in zip(codes, weights)))

spec = ThresholdSpec(0.25, 0.5)
r = if_silence_run(V, spec, emission="spike", T=16)
print(f"S_th={spec.S_th}: st={r.silence_count_st}, residual={r.residual_V_rest}, "
      f"output={r.output_value} vs {0.25 * 0.5 * V}, truncated={r.truncated}")

c = if_ttfs_classic_run(train, weights, spec.S_th)
print(f"classic TTFS: fires at t={c.spike_time} with V={c.potential_at_fire}, "
      f"discards {c.discarded_potential}")
