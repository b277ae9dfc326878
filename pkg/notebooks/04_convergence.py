# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       format_name: percent
# ---

# %% [markdown]
# # Explicit sensors versus the coupling-free hierarchy
#
# The explicit-sensor model carries a finite coupling eps.  As eps shrinks
# its spectrum and zero-delay g2 approach the hierarchy values.  The gap
# closes as eps^2 for both quantities.

# %%
import math
import warnings

import numpy as np

from specsense.emitter import CM1_TO_RADPS, R3_CM1, R4_CM1, build_vibronic_dimer
from specsense.hierarchy import HierarchySolver, SensorSpec
from specsense.oracle import OracleWarning, build_joint, eps_bound, oracle_gM_zero, oracle_spectrum

model = build_vibronic_dimer()
solver = HierarchySolver(model)
s1 = SensorSpec.from_cm1(R4_CM1, 1 / 4.8)
s2 = SensorSpec.from_cm1(R3_CM1, 1 / 4.8)
S_h = s2.gamma / (2 * math.pi) * solver.population(s2)
g_h = solver.g2_zero(s1, s2)
print(f"weak-coupling bound: {eps_bound(model, [s2]) / CM1_TO_RADPS:.4f} cm^-1")

# %%
eps_list = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2]
dS, dg = [], []
with warnings.catch_warnings():
    warnings.simplefilter("ignore", OracleWarning)
    for e in eps_list:
        eps = e * CM1_TO_RADPS
        dS.append(oracle_spectrum(build_joint(model, [s2], eps)) - S_h)
        dg.append(oracle_gM_zero(build_joint(model, [s1, s2], eps)) - g_h)
        print(f"eps = {e:.0e}  S_oracle - S = {dS[-1]:+.3e}   g2_oracle - g2 = {dg[-1]:+.3e}")

# %%
x = np.log(eps_list)
print("log-log slope, spectrum:", np.polyfit(x, np.log(np.abs(dS)), 1)[0])
print("log-log slope, g2(0):   ", np.polyfit(x, np.log(np.abs(dg)), 1)[0])
