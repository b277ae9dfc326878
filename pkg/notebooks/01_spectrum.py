# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       format_name: percent
# ---

# %% [markdown]
# # Filtered emission spectrum of the vibronic dimer
#
# A Lorentzian sensor of linewidth 1/4.8 ps^-1 is swept across the excited
# manifold.  Each point is one shifted solve against the emitter Liouvillian,
# so the whole 801-point scan takes a couple of seconds.

# %%
import numpy as np

from specsense.emitter import CM1_TO_RADPS, DimerParams, build_vibronic_dimer, excited_eigensystem
from specsense.hierarchy import HierarchySolver, SensorSpec, power_spectrum

params = DimerParams()
model = build_vibronic_dimer(params)
solver = HierarchySolver(model)
print(f"dim = {model.dim}, exciton splitting = {params.delta_E:.2f} cm^-1")

# %% [markdown]
# The bright lines should sit close to the excited vibronic eigenenergies
# shifted by the ground-state vibrational ladder.

# %%
levels = [e / CM1_TO_RADPS for e, _ in excited_eigensystem(model)]
print("lowest excited eigenenergies (cm^-1):", np.round(levels[:4], 1))

# %%
grid = np.linspace(17000.0, 19000.0, 801)
sensor = SensorSpec.from_cm1(grid[0], 1 / 4.8)
curve = power_spectrum(model, sensor, grid, solver)

peaks = curve.local_maxima()
order = peaks[np.argsort(curve.values[peaks])[::-1]]
print("strongest local maxima:")
for k in order[:5]:
    print(f"  {grid[k]:8.1f} cm^-1   S = {curve.values[k]:.4e}")

# %% [markdown]
# Edges of the window carry only Lorentzian tails of the filter.

# %%
print(f"S at the edges relative to the maximum: {curve.values[0] / curve.values.max():.2e}, "
      f"{curve.values[-1] / curve.values.max():.2e}")
