# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       format_name: percent
# ---

# %% [markdown]
# # Zero-delay cross correlations
#
# Fix the second filter at 17455 cm^-1 and scan the first one.  Values below
# one mean the two colours are anti-bunched.

# %%
import numpy as np

from specsense.emitter import R3_CM1, R4_CM1, build_vibronic_dimer
from specsense.hierarchy import HierarchySolver, SensorSpec

model = build_vibronic_dimer()
solver = HierarchySolver(model)
gamma = 1 / 4.8

# %%
grid = np.linspace(17000.0, 19000.0, 201)
s2 = SensorSpec.from_cm1(R3_CM1, gamma)
g2 = np.array([solver.g2_zero(SensorSpec.from_cm1(w, gamma), s2) for w in grid])
print(f"g2(w1, {R3_CM1:.0f}, 0): min {g2.min():.4f} at {grid[g2.argmin()]:.0f}, "
      f"max {g2.max():.4f} at {grid[g2.argmax()]:.0f}")

# %% [markdown]
# A small symmetric patch: with the same emission operator on both sensors
# the map is symmetric under exchange of the two frequencies.

# %%
patch = np.linspace(17300.0, 18600.0, 5)
G = np.array([[solver.g2_zero(SensorSpec.from_cm1(a, gamma), SensorSpec.from_cm1(b, gamma))
               for b in patch] for a in patch])
print(np.round(G, 4))
print("asymmetry:", np.abs(G - G.T).max())

# %% [markdown]
# Higher-order coincidences use the same machinery.

# %%
s4 = SensorSpec.from_cm1(R4_CM1, gamma)
print("g2(R4, R3) =", solver.g2_zero(s4, s2))
print("g3(R4, R3, R3) =", solver.gM_zero([s4, s2, s2]))
