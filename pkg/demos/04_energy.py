"""Analytical energy of one transformer block under four execution methods.

Units are the relative costs of the constants table.  A joules-per-unit
scalar is fitted on a published baseline figure and used to put the
Kirin prediction in microjoules.
"""

from spikehybrid import energy as en

c = en.EnergyConstants()
for preset in sorted(en.MODEL_PRESETS):
    i = en.preset_inputs(preset, B=1, S=1)
    cmp = en.method_comparison(i, c, overrides=en.standard_overrides(i))
    att = {m: float(r.attention.total) for m, r in cmp.per_method.items()}
    print(f"{preset:>10}: block " + ", ".join(f"{m}={float(cmp.total(m)):.3g}" for m in en.METHODS)
          + f" | attention saving vs mixed_quant {1 - att['kirin'] / att['mixed_quant']:.1%}")

cal = en.reference_calibration()
print(f"calibrated on opt-2.7b: {cal.joules_per_unit:.4g} J/unit; "
      f"kirin predicted {cal.predicted_uJ:.2f} uJ vs reported {cal.target_uJ} uJ ({cal.relative_error:+.1%})")

# a measured trace priced by counting and by the closed form
import numpy as np
from spikehybrid.hybrid import hybrid_matmul
from spikehybrid.quantizer import quantize

rng = np.random.default_rng(2)
qa = quantize(rng.standard_normal((6, 10)) * np.r_[[20] * 2, [1] * 8], "column")
qw = quantize(rng.standard_normal((10, 4)), "row", scale_axis=1, outlier_channels=())
tr = hybrid_matmul(qa, qw, orientation="A").trace
exact = c.exact()
print("counted", float(en.counting_oracle(tr, exact).total),
      "closed form", float(en.le_kirin(en.measured_inputs(tr), exact).total))
