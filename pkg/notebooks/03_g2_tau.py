# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       format_name: percent
# ---

# %% [markdown]
# # Time-resolved cross correlation
#
# Positive delays mean the 18515 cm^-1 photon came first.  The three
# contributions are the detector memory (`I0`) and the first and second
# order response of the waiting sensor (`I1`, `I2`).

# %%
import numpy as np

from specsense.emitter import R3_CM1, R4_CM1, build_vibronic_dimer
from specsense.hierarchy import HierarchySolver, SensorSpec
from specsense.timecorr import conditional_state, dominant_transition, g2_tau, i1_asymptotic, i2, i2_asymptotic

model = build_vibronic_dimer()
solver = HierarchySolver(model)
s1 = SensorSpec.from_cm1(R4_CM1, 1 / 4.8)
s2 = SensorSpec.from_cm1(R3_CM1, 1 / 4.8)

# %%
taus = np.linspace(-20.0, 20.0, 81)
curve = g2_tau(model, s1, s2, taus, solver)
for t in (-20, -10, -2, 0, 2, 10, 20):
    k = int(np.argmin(np.abs(taus - t)))
    c = {name: v[k] for name, v in curve.components.items()}
    print(f"tau = {t:+5.1f} ps  g2 = {curve.values[k]:.4f}  "
          f"(I0 {c['I0']:.4f}, I1 {c['I1']:+.4f}, I2 {c['I2']:.4f})")
print("max |g2(tau) - g2(-tau)| =", np.abs(curve.values - curve.values[::-1]).max())

# %% [markdown]
# Long delays: the two photons become uncorrelated.

# %%
print("g2 at +-5 ns:", g2_tau(model, s1, s2, [-5000.0, 5000.0], solver).values)

# %% [markdown]
# Asymptotic approximants (diagnostics) against the exact terms.

# %%
blocks = conditional_state(solver.solve([s1, s2]), 1)
gamma_sys, omega_sys = dominant_transition(blocks, model)
print(f"dominant decay {gamma_sys:.3f} ps^-1")
for t in (10.0, 50.0, 200.0):
    exact = i2(blocks, model, tau=t) * blocks.norm
    approx = i2_asymptotic(blocks, model, tau=t) * blocks.norm
    print(f"tau = {t:6.1f}  nu I2 = {exact:.5f}  approximant {approx:.5f}")
print("fast-emitter I1 at 5/gamma_sys:",
      i1_asymptotic(blocks, model, tau=5 / gamma_sys, regime="fast"))
