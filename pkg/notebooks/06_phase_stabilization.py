# %% [markdown]
# # Interferometer drift and active locking
#
# The analyzer phase diffuses during each measurement window and is reset
# to a small residual by a lock cycle. The mean cosine of the phase error
# multiplies the visibility.

# %%
import numpy as np

from timebin.stabilization import DriftModel, Schedule, diffusion_for_factor, evolve_phase, residual_visibility_factor

schedule = Schedule(100.0, 5.0)
d = diffusion_for_factor(0.95, schedule)
print(f"diffusion giving a 0.95 factor over 100 s windows: {d:.2e} rad^2/s")

# %%
model = DriftModel(d, 0.02)
for measure in (25.0, 50.0, 100.0, 200.0):
    print(f"window {measure:5.0f} s -> factor {residual_visibility_factor(model, Schedule(measure, 5.0)):.4f}")

# %%
rng = np.random.default_rng(0)
t = np.linspace(0, 300, 7)
print("one phase trajectory (rad):", np.round(evolve_phase(model, schedule, t, rng), 3))
