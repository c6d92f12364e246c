"""A toy transformer block run four ways.

``fp`` is real arithmetic, ``quant_ann`` the integer reference,
``snn_baseline`` rate-coded spiking with a 256-step window on outlier
channels and ``kirin`` the hybrid executor.  The report checks that Kirin
reproduces the reference layer by layer inside the 16-step window.
"""

from spikehybrid.pipeline import BlockConfig, build_block, compare

cfg = BlockConfig(S=8, H=32, weight_distribution="gaussian_plus_outlier_channels", gamma=2, seed=3)
report, runs = compare(build_block(cfg))
for c in report.checks:
    print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
print("latest output of each layer (kirin):",
      {name: st.trace.max_spike_time for name, st in runs["kirin"].layers.items()})
# 4-bit codes are coarse: with loud outlier weights the attention scores run
# into the hundreds, softmax turns nearly one-hot and rounding can move its
# peak, so fp and quant_ann drift apart while kirin still tracks quant_ann.
print("max |fp - quant_ann| at the block output:", round(report.final_dev["fp"], 3))
for method, err in report.energy_errors.items():
    print(f"{method}: {err}")
